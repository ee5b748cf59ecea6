"""Minimum description length of a block partition and MDL order selection.

    L = |E| h(q(q+1) / (2|E|)) + n log q - |E| sum_rs m_rs log(m_rs / (n_r n_s))
    h(x) = (1 + x) log(1 + x) - x log x

The sum runs over ordered pairs (r, s).  Diagonal blocks carry
``m_rr = |E_rr| / |E|`` and each off-diagonal edge count is split evenly
between (r, s) and (s, r), so ``sum_rs m_rs = 1``.  The alternative
``convention="unordered"`` sums over r <= s with the full inter-block count
and ``n_r n_s`` unchanged.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch

__all__ = ["BlockStats", "block_stats", "h", "description_length", "MDLResult", "mdl_select"]

CONVENTIONS = ("ordered", "unordered")


def h(x):
    """(1+x) log(1+x) - x log x, with h(0) = 0."""
    if x <= 0:
        return 0.0
    return (1 + x) * math.log1p(x) - x * math.log(x)


@dataclass(frozen=True, eq=False)
class BlockStats:
    """``counts[r, s]`` is the number of edges between blocks r and s, each
    undirected edge counted once (upper triangle plus diagonal)."""

    counts: np.ndarray
    nfrac: np.ndarray
    E: int

    @property
    def q(self):
        return self.nfrac.size

    @property
    def m(self):
        """Ordered-pair edge proportions; symmetric, sums to 1."""
        if self.E == 0:
            return np.zeros_like(self.counts, dtype=float)
        c = self.counts.astype(float)
        full = (c + c.T) / 2.0
        full[np.diag_indices_from(full)] = np.diag(c)
        return full / self.E


def block_stats(graph, partition):
    labels = np.asarray(getattr(partition, "labels", partition))
    if labels.size != graph.n:
        raise DimensionMismatch(f"partition covers {labels.size} nodes, graph has {graph.n}")
    q = int(getattr(partition, "q", labels.max(initial=0) + 1))
    u, v = graph.edges[:, 0], graph.edges[:, 1]
    lu, lv = labels[u], labels[v]
    lo, hi = np.minimum(lu, lv), np.maximum(lu, lv)
    counts = np.zeros((q, q), dtype=np.int64)
    np.add.at(counts, (lo, hi), 1)
    nfrac = np.bincount(labels, minlength=q) / max(graph.n, 1)
    return BlockStats(counts, nfrac, int(graph.m))


def _xlogy_ratio(m, denom):
    mask = m > 0
    return float((m[mask] * np.log(m[mask] / denom[mask])).sum())


def description_length(graph, partition, convention="ordered"):
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    st = block_stats(graph, partition)
    q, n, E = st.q, graph.n, st.E
    entropy_term = n * math.log(q)
    if E == 0:
        warnings.warn("graph has no edges; description length is the partition entropy alone",
                      RuntimeWarning, stacklevel=2)
        return entropy_term
    outer = np.outer(st.nfrac, st.nfrac)
    if convention == "ordered":
        fit = _xlogy_ratio(st.m, outer)
    else:
        iu = np.triu_indices(q)
        fit = _xlogy_ratio(st.counts[iu] / E, outer[iu])
    return E * h(q * (q + 1) / (2.0 * E)) + entropy_term - E * fit


@dataclass(frozen=True)
class MDLResult:
    q: int
    curve: dict

    def to_dict(self):
        return {"q": self.q, "curve": {str(k): v for k, v in self.curve.items()}}


def mdl_select(graph, partitions_by_q, convention="ordered"):
    """Candidate with the smallest description length; ties go to the
    smaller ``q``."""
    if not partitions_by_q:
        raise ValueError("no candidate partitions")
    curve = {int(q): description_length(graph, p, convention)
             for q, p in sorted(partitions_by_q.items())}
    best = min(curve, key=lambda q: (curve[q], q))
    return MDLResult(best, curve)
