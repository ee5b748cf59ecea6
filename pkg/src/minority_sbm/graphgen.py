"""Seeded sampling of SBM graphs with planted minority communities.

Randomness comes from numpy's counter-based ``Philox`` bit generator keyed by
a ``SeedSequence``; :func:`make_rng` accepts an int, a tuple of ints (master
seed followed by spawn-key components) or a ``SeedSequence``.  Identical
seeds give identical graphs on every platform numpy supports.

Edges within a block pair are placed by geometric skipping over the linear
pair index, so sampling costs O(edges) rather than O(n^2).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, GraphFormatError, InfeasibleParameters
from .theory import MinorityModel, Scenario, affinity_matrix, edge_probabilities

__all__ = [
    "Partition",
    "SparseGraph",
    "BackgroundPlan",
    "make_rng",
    "block_sizes",
    "plan_background",
    "sample_sbm",
    "sample_direct",
    "sample_via_background",
    "sample_consistent_degree",
    "write_edgelist",
    "read_edgelist",
    "write_sidecar",
    "read_sidecar",
]


def make_rng(seed):
    """Philox generator from an int, a tuple ``(master, *keys)`` or a SeedSequence."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        ss = seed
    elif isinstance(seed, tuple):
        ss = np.random.SeedSequence(int(seed[0]), spawn_key=tuple(int(k) for k in seed[1:]))
    else:
        ss = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(ss))


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Partition:
    """Node-to-community assignment with labels in ``0..q-1``."""

    labels: np.ndarray
    q: int

    def __post_init__(self):
        labels = _frozen(self.labels, np.int64)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "q", int(self.q))
        if self.q < 1:
            raise ValueError("a partition needs q >= 1")
        if labels.size and (labels.min() < 0 or labels.max() >= self.q):
            raise ValueError(f"labels must lie in 0..{self.q - 1}")

    @classmethod
    def from_labels(cls, labels):
        """Relabel arbitrary hashable labels to ``0..q-1`` in order of first
        appearance."""
        _, first, inv = np.unique(np.asarray(labels), return_index=True, return_inverse=True)
        order = np.argsort(np.argsort(first))
        return cls(order[inv], len(first) if len(first) else 1)

    @property
    def n(self):
        return self.labels.size

    @property
    def assign(self):
        return self.labels

    def sizes(self):
        return np.bincount(self.labels, minlength=self.q)

    def __eq__(self, other):
        return (isinstance(other, Partition) and self.q == other.q
                and np.array_equal(self.labels, other.labels))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class SparseGraph:
    """Undirected simple graph with a planted partition.

    ``edges`` is an ``(m, 2)`` array of pairs ``u < v`` sorted
    lexicographically.  ``adjacency`` is the symmetric CSR matrix whose rows
    are the sorted neighbour lists.
    """

    n: int
    edges: np.ndarray
    planted: Partition | None = None

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if e.size:
            if e.min() < 0 or e.max() >= self.n:
                raise DimensionMismatch(f"edge endpoint outside 0..{self.n - 1}")
            if np.any(e[:, 0] == e[:, 1]):
                raise GraphFormatError("self-loops are not allowed")
            e = np.sort(e, axis=1)
            e = np.unique(e, axis=0)
        object.__setattr__(self, "edges", _frozen(e, np.int64))
        if self.planted is not None and self.planted.n != self.n:
            raise DimensionMismatch(
                f"planted partition has {self.planted.n} nodes, graph has {self.n}")
        u, v = e[:, 0], e[:, 1]
        data = np.ones(2 * len(e))
        adj = sp.csr_matrix((data, (np.r_[u, v], np.r_[v, u])), shape=(self.n, self.n))
        adj.sort_indices()
        object.__setattr__(self, "_adj", adj)

    @property
    def adjacency(self):
        return self._adj

    @property
    def m(self):
        return len(self.edges)

    def degrees(self):
        return np.diff(self._adj.indptr)

    def neighbors(self, i):
        a = self._adj
        return a.indices[a.indptr[i]:a.indptr[i + 1]]

    def mean_degree(self):
        return 2.0 * self.m / self.n

    def block_edge_counts(self, labels=None):
        """``q x q`` matrix of edge counts between blocks (each edge counted
        once, at ``[r, s]`` and ``[s, r]`` for r != s)."""
        part = self.planted if labels is None else labels
        lab = part.labels
        q = part.q
        c = np.zeros((q, q), dtype=np.int64)
        np.add.at(c, (lab[self.edges[:, 0]], lab[self.edges[:, 1]]), 1)
        return c + c.T - np.diag(np.diag(c))


# ---------------------------------------------------------------------------
# block sizes and the background plan
# ---------------------------------------------------------------------------

def block_sizes(model):
    """Integer community sizes summing to ``n``.

    Minority sizes are ``round(n rho / q_s)`` (half to even); the majority
    blocks share the remainder by the largest-remainder method.
    """
    small = round(model.n * model.rho / model.q_s)
    if small < 1:
        raise InfeasibleParameters(
            f"minority communities would be empty (n*rho/q_s = {model.n * model.rho / model.q_s:.3g})")
    rest = model.n - model.q_s * small
    base, extra = divmod(rest, model.q_b)
    if base < 1:
        raise InfeasibleParameters("majority communities would be empty")
    big = [base + (1 if k < extra else 0) for k in range(model.q_b)]
    return np.array([small] * model.q_s + big, dtype=np.int64)


class BackgroundPlan(NamedTuple):
    n_f: float
    rho_f: float
    q: int


def _background_plan(n, q_s, q_b, rho):
    mix = q_b * rho + q_s * (1 - rho)
    return BackgroundPlan(n * (q_s + q_b) * mix / (q_s * q_b), q_b * rho / mix, q_s + q_b)


def plan_background(model):
    """Size ``n_f`` of the symmetric background SBM and the minority sampling
    fraction ``rho_f`` that yield ``n`` nodes with minority share ``rho``."""
    if model.scenario != Scenario.CONSISTENT_POUT:
        raise InfeasibleParameters("background subsampling applies to the consistent-p_out scenario")
    return _background_plan(model.n, model.q_s, model.q_b, model.rho)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def _skip_positions(n_pairs, p, rng):
    """Sorted indices in ``range(n_pairs)`` each kept with probability ``p``."""
    if n_pairs <= 0 or p <= 0:
        return np.empty(0, dtype=np.int64)
    if p >= 1:
        return np.arange(n_pairs, dtype=np.int64)
    mean = n_pairs * p
    chunk = int(mean + 6 * math.sqrt(mean) + 16)
    pos = []
    last = -1
    while True:
        # tiny p gives gaps near the int64 limit; cap them so cumsum cannot wrap
        gaps = np.minimum(rng.geometric(p, size=chunk), n_pairs)
        idx = last + np.cumsum(gaps)
        if idx[-1] >= n_pairs:
            pos.append(idx[idx < n_pairs])
            break
        pos.append(idx)
        last = int(idx[-1])
    return np.concatenate(pos).astype(np.int64)


def _unrank_lower(k):
    """Map linear indices over the strict lower triangle to ``(i, j)``, i > j."""
    i = np.floor((1 + np.sqrt(1 + 8 * k.astype(np.float64))) / 2).astype(np.int64)
    # float rounding can be off by one for huge k
    i -= (i * (i - 1) // 2) > k
    i += ((i + 1) * i // 2) <= k
    return i, k - i * (i - 1) // 2


def sample_sbm(sizes, omega, seed):
    """Sample an undirected SBM with integer block ``sizes`` and probability
    matrix ``omega``; nodes are numbered block by block."""
    sizes = np.asarray(sizes, dtype=np.int64)
    omega = np.asarray(omega, dtype=np.float64)
    if np.any(omega < 0) or np.any(omega > 1):
        raise InfeasibleParameters("edge probabilities must lie in [0, 1]")
    rng = make_rng(seed)
    offsets = np.r_[0, np.cumsum(sizes)]
    n = int(offsets[-1])
    parts = []
    q = len(sizes)
    for r in range(q):
        nr = int(sizes[r])
        pos = _skip_positions(nr * (nr - 1) // 2, omega[r, r], rng)
        i, j = _unrank_lower(pos)
        parts.append(np.column_stack([j + offsets[r], i + offsets[r]]))
        for s in range(r + 1, q):
            ns = int(sizes[s])
            pos = _skip_positions(nr * ns, omega[r, s], rng)
            parts.append(np.column_stack([pos // ns + offsets[r], pos % ns + offsets[s]]))
    edges = np.concatenate(parts) if parts else np.empty((0, 2), dtype=np.int64)
    labels = np.repeat(np.arange(q), sizes)
    return SparseGraph(n, edges, Partition(labels, q))


def sample_direct(model, probs=None, seed=0):
    """Sample a graph of ``model`` block by block (default generator)."""
    omega = affinity_matrix(model, probs)
    return sample_sbm(block_sizes(model), omega, seed)


def sample_consistent_degree(model, seed=0):
    if model.scenario != Scenario.CONSISTENT_DEGREE:
        raise InfeasibleParameters("sample_consistent_degree needs a consistent-degree model")
    return sample_direct(model, None, seed)


def sample_via_background(model, probs=None, seed=0):
    """Generate a symmetric SBM on ``n_f`` nodes and keep a fraction ``rho_f``
    of each minority block and ``1 - rho_f`` of each majority block.

    Sampled counts are the integerised targets of :func:`block_sizes`;
    background blocks hold ``round(n_f / q)`` nodes (half to even), enlarged if
    needed to contain the target.
    """
    plan = plan_background(model)
    probs = edge_probabilities(model) if probs is None else probs
    targets = block_sizes(model)
    b = max(round(plan.n_f / plan.q), int(targets.max()))
    q = plan.q
    omega = np.full((q, q), min(max(probs.p_out, 0.0), 1.0))
    np.fill_diagonal(omega, min(max(probs.p_in, 0.0), 1.0))
    rng = make_rng(seed)
    background = sample_sbm(np.full(q, b), omega, rng)
    keep = np.concatenate([
        r * b + np.sort(rng.choice(b, size=int(targets[r]), replace=False)) for r in range(q)])
    new_id = np.full(q * b, -1, dtype=np.int64)
    new_id[keep] = np.arange(len(keep))
    e = new_id[background.edges]
    e = e[(e >= 0).all(axis=1)]
    labels = np.repeat(np.arange(q), targets)
    return SparseGraph(len(keep), e, Partition(labels, q))


# ---------------------------------------------------------------------------
# serialisation
# ---------------------------------------------------------------------------

def write_edgelist(graph, path):
    """Write ``"u v"`` lines (0-indexed, u < v)."""
    path = Path(path)
    with path.open("w") as fh:
        for u, v in graph.edges:
            fh.write(f"{u} {v}\n")


def read_edgelist(path, n=None, planted=None):
    """Read an edge list written by :func:`write_edgelist`.

    ``n`` defaults to one more than the largest endpoint.  Blank lines and
    lines starting with ``#`` are skipped.
    """
    rows = []
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise GraphFormatError(f"{path}:{lineno}: expected 'u v', got {line!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: non-integer node id in {line!r}") from None
            if u < 0 or v < 0:
                raise GraphFormatError(f"{path}:{lineno}: negative node id")
            if u == v:
                raise GraphFormatError(f"{path}:{lineno}: self-loop {u}")
            rows.append((u, v))
    edges = np.array(rows, dtype=np.int64).reshape(-1, 2)
    if n is None:
        n = int(edges.max()) + 1 if len(edges) else (planted.n if planted is not None else 0)
    elif len(edges) and edges.max() >= n:
        raise DimensionMismatch(f"edge list references node {edges.max()} but n = {n}")
    return SparseGraph(int(n), edges, planted)


def write_sidecar(graph, path, model=None, extra=None):
    """JSON sidecar with node count, planted labels and model parameters."""
    doc = {"n": graph.n, "m": graph.m}
    if graph.planted is not None:
        doc["q"] = graph.planted.q
        doc["labels"] = graph.planted.labels.tolist()
    if model is not None:
        doc["model"] = model.to_dict()
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def read_sidecar(path):
    """Return ``(n, planted Partition or None, model or None, raw dict)``."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"{path}: invalid JSON ({exc.msg})") from None
    if "n" not in doc:
        raise GraphFormatError(f"{path}: missing 'n'")
    planted = None
    if "labels" in doc:
        labels = np.asarray(doc["labels"], dtype=np.int64)
        if labels.size != doc["n"]:
            raise DimensionMismatch(f"{path}: {labels.size} labels for n = {doc['n']}")
        planted = Partition(labels, doc.get("q", int(labels.max()) + 1))
    model = MinorityModel.from_dict(doc["model"]) if "model" in doc else None
    return int(doc["n"]), planted, model, doc
