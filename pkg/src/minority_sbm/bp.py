"""Belief propagation for the sparse SBM, EM parameter learning, and order
selection by minimum Bethe free energy.

Messages follow the standard sparse formulation: non-edges enter only
through a mean-field term ``h_r = (1/N) sum_i sum_s c_rs marg_is`` with
``c = N * Omega``.  Nodes are updated asynchronously in a fresh random order
each sweep.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _bp_kernels as K
from .graphgen import Partition, make_rng

__all__ = [
    "SBMParams",
    "BPState",
    "bp_infer",
    "EMResult",
    "em_fit",
    "OrderSelectionTrace",
    "mfe_select",
    "BPDiagnostics",
    "detect_bp",
]

TOL = 1e-6
MAX_SWEEPS = 500
DAMPING = 0.2
STALL_WINDOW = 20
EM_MAX_SWEEPS = 1000
EM_BLOCK = 10
EM_TOL = 1e-6
EM_MESSAGE_TOL = 1e-3
MONOTONE_TOL = 1e-9
COLLAPSE_RETRIES = 3


def _child(seed, *keys):
    if isinstance(seed, tuple):
        return seed + tuple(keys)
    return (int(seed),) + tuple(keys)


@dataclass(frozen=True, eq=False)
class SBMParams:
    """Community fractions and the (unscaled) affinity matrix."""

    nfrac: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        nf = np.asarray(self.nfrac, dtype=np.float64)
        om = np.asarray(self.omega, dtype=np.float64)
        if om.shape != (nf.size, nf.size):
            raise ValueError("omega must be q x q with q = len(nfrac)")
        if np.any(nf < 0) or abs(nf.sum() - 1.0) > 1e-9:
            raise ValueError("community fractions must be non-negative and sum to 1")
        if np.any(om < 0) or not np.allclose(om, om.T):
            raise ValueError("omega must be symmetric with non-negative entries")
        object.__setattr__(self, "nfrac", nf)
        object.__setattr__(self, "omega", om)

    @property
    def q(self):
        return self.nfrac.size

    @classmethod
    def from_model(cls, model, probs=None):
        from .theory import affinity_matrix, community_sizes
        sizes = np.asarray(community_sizes(model), dtype=float)
        return cls(sizes / sizes.sum(), affinity_matrix(model, probs))

    def to_dict(self):
        return {"nfrac": self.nfrac.tolist(), "omega": self.omega.tolist()}


class _Topology:
    """CSR arrays plus the reverse-edge map, shared by every run on a graph."""

    def __init__(self, graph):
        a = graph.adjacency
        self.n = graph.n
        self.m = graph.m
        self.indptr = a.indptr.astype(np.int64)
        self.indices = a.indices.astype(np.int64)
        self.rev = K.reverse_index(self.indptr, self.indices)
        self.maxdeg = int(np.diff(self.indptr).max(initial=0))

    def buffer(self, q):
        return np.empty((max(self.maxdeg, 1), q))


def _topology(graph):
    topo = graph.__dict__.get("_bp_topology")
    if topo is None:
        topo = _Topology(graph)
        object.__setattr__(graph, "_bp_topology", topo)
    return topo


@dataclass(eq=False)
class BPState:
    messages: np.ndarray
    marginals: np.ndarray
    fields: np.ndarray
    params: SBMParams
    free_energy: float
    converged: bool
    sweeps: int
    damped: bool = False

    @property
    def q(self):
        return self.params.q

    def partition(self):
        return Partition(np.argmax(self.marginals, axis=1).astype(np.int64), self.q)


def _random_simplex(rng, rows, q):
    x = rng.random((rows, q)) + 1e-3
    return x / x.sum(axis=1, keepdims=True)


def _run(topo, c, nfrac, psi, marg, rng, max_sweeps, tol):
    n, q = marg.shape
    h = K.field_from_marginals(marg, c)
    buf = topo.buffer(q)
    damp, best, stall, converged, sweeps = 0.0, np.inf, 0, False, 0
    for sweeps in range(1, max_sweeps + 1):
        order = rng.permutation(n)
        change = K.sweep(topo.indptr, topo.indices, topo.rev, psi, marg, h, c, nfrac,
                         order, damp, buf)
        if change < tol:
            converged = True
            break
        if change < best:
            best, stall = change, 0
        else:
            stall += 1
            if stall >= STALL_WINDOW and damp == 0.0:
                damp, stall = DAMPING, 0
    # rebuild the field from scratch so incremental drift never leaks out
    h = K.field_from_marginals(marg, c)
    cbar = float(nfrac @ c @ nfrac)
    f = K.free_energy(topo.indptr, topo.indices, topo.rev, psi, h, c, nfrac, cbar, buf)
    return h, float(f), converged, sweeps, damp > 0.0


def bp_infer(graph, q, params, seed=0, max_sweeps=MAX_SWEEPS, tol=TOL, messages=None):
    """Run BP to a fixed point (or ``max_sweeps``) at fixed parameters."""
    if q < 1 or params.q != q:
        raise ValueError(f"params describe {params.q} communities, asked for q={q}")
    topo = _topology(graph)
    rng = make_rng(seed)
    psi = (_random_simplex(rng, topo.indices.size, q) if messages is None
           else np.array(messages, dtype=np.float64, copy=True))
    marg = np.tile(params.nfrac, (graph.n, 1)) if q > 1 else np.ones((graph.n, 1))
    c = params.omega * graph.n
    h, f, conv, sweeps, damped = _run(topo, c, params.nfrac, psi, marg, rng, max_sweeps, tol)
    return BPState(psi, marg, h, params, f, conv, sweeps, damped)


@dataclass(eq=False)
class EMResult:
    state: BPState
    params: SBMParams
    history: list
    monotone: bool
    collapsed: bool
    attempts: int

    @property
    def free_energy(self):
        return self.state.free_energy


def _initial_c(rng, q, cbar):
    """Random assortative affinities with mean degree ``cbar``.  The contrast
    ``c_in - c_out = q * lam`` puts ``lam^2 / cbar`` between roughly 2 and 4,
    above the detectability threshold for every ``q``, so the first sweeps
    are not pulled into the paramagnetic fixed point."""
    if q == 1:
        return np.array([[cbar]])
    lam = min(np.sqrt(cbar) * rng.uniform(1.5, 2.0), 0.9 * cbar)
    c = np.full((q, q), cbar - lam)
    c[np.diag_indices(q)] = cbar + (q - 1) * lam
    c *= rng.uniform(0.95, 1.05, size=(q, q))
    c = (c + c.T) / 2
    nf = np.full(q, 1.0 / q)
    return c * (cbar / (nf @ c @ nf))


def _pair_mle(counts, sizes):
    """Omega from expected edge counts; diagonal over N_r (N_r - 1) pairs."""
    outer = np.outer(sizes, sizes)
    pairs = outer - np.diag(sizes)
    denom = np.where(np.eye(sizes.size, dtype=bool), pairs, outer)
    return np.divide(counts, denom, out=np.zeros_like(counts), where=denom > 0)


def _m_step(topo, psi, marg, c):
    n = marg.shape[0]
    counts = K.pair_counts(topo.indptr, topo.indices, topo.rev, psi, c)
    nfrac = marg.mean(axis=0)
    nfrac /= nfrac.sum()
    with np.errstate(divide="ignore", invalid="ignore"):
        new_c = counts / (n * np.outer(nfrac, nfrac))
    return nfrac, np.nan_to_num(new_c), counts


def _em_once(graph, topo, q, rng, max_sweeps, tol, init=None):
    """One EM run with the M-step applied after every BP sweep.

    The free energy is evaluated once per block of ``EM_BLOCK`` sweeps; the
    run stops when two consecutive blocks change it by less than ``tol`` and
    the messages have settled, or after ``max_sweeps``.
    """
    n = graph.n
    cbar = 2.0 * topo.m / n if n else 0.0
    if init is None:
        c = _initial_c(rng, q, max(cbar, 1e-12))
        nfrac = np.full(q, 1.0 / q)
    else:
        c, nfrac = init.omega * n, init.nfrac.copy()
    psi = _random_simplex(rng, topo.indices.size, q)
    marg = _random_simplex(rng, n, q)
    h = K.field_from_marginals(marg, c)
    buf = topo.buffer(q)
    history, collapsed, converged, still = [], False, False, 0
    for sweeps in range(1, max_sweeps + 1):
        change = K.sweep(topo.indptr, topo.indices, topo.rev, psi, marg, h, c, nfrac,
                         rng.permutation(n), 0.0, buf)
        nfrac, c, _ = _m_step(topo, psi, marg, c)
        if np.any(n * nfrac < 0.5):
            collapsed = True
            break
        h = K.field_from_marginals(marg, c)
        if sweeps % EM_BLOCK:
            continue
        f = K.free_energy(topo.indptr, topo.indices, topo.rev, psi, h, c, nfrac,
                          float(nfrac @ c @ nfrac), buf)
        still = still + 1 if history and abs(f - history[-1]) < tol else 0
        history.append(float(f))
        if change < TOL or (still >= 2 and change < EM_MESSAGE_TOL):
            converged = True
            break
    f = float(K.free_energy(topo.indptr, topo.indices, topo.rev, psi, h, c, nfrac,
                            float(nfrac @ c @ nfrac), buf))
    if not history or history[-1] != f:
        history.append(f)
    state = BPState(psi, marg, h, SBMParams(nfrac, c / n), f, converged, sweeps, False)
    counts = K.pair_counts(topo.indptr, topo.indices, topo.rev, psi, c)
    learned = SBMParams(nfrac, _pair_mle(counts, nfrac * n))
    return state, learned, history, collapsed


def _fit_run(graph, q, seed, max_sweeps, tol, init=None):
    topo = _topology(graph)
    rng = make_rng(seed)
    for attempt in range(1, COLLAPSE_RETRIES + 1):
        state, learned, history, collapsed = _em_once(graph, topo, q, rng, max_sweeps, tol,
                                                      init if attempt == 1 else None)
        if not collapsed:
            break
    steps = np.diff(history)
    monotone = bool(np.all(steps <= MONOTONE_TOL)) if steps.size else True
    return EMResult(state, learned, history, monotone, collapsed, attempt)


def em_fit(graph, q, t=5, seed=0, max_sweeps=EM_MAX_SWEEPS, tol=EM_TOL, init=None):
    """Best of ``t`` EM runs by final free energy.

    Returns ``(state, learned_params)``; ``learned_params.omega`` is the
    pair-count estimate ``E_rs / (N_r N_s)`` (``2 E_rr / (N_r (N_r - 1))`` on
    the diagonal) built from BP's expected edge counts.  The full
    :class:`EMResult` of the winning run is attached as ``state.em``.

    ``init`` (an :class:`SBMParams`) replaces the random starting parameters;
    messages are still random per restart.
    """
    if t < 1:
        raise ValueError("need at least one restart")
    if init is not None and init.q != q:
        raise ValueError(f"init describes {init.q} communities, asked for q={q}")
    best = None
    for r in range(t):
        res = _fit_run(graph, q, _child(seed, r), max_sweeps, tol, init)
        if best is None or res.free_energy < best.free_energy:
            best = res
    best.state.em = best
    return best.state, best.params


@dataclass
class OrderSelectionTrace:
    q: list = field(default_factory=list)
    f_min: list = field(default_factory=list)
    rounded: list = field(default_factory=list)
    compared_to: list = field(default_factory=list)
    decision: list = field(default_factory=list)
    converged: list = field(default_factory=list)
    monotone: list = field(default_factory=list)
    q_star: int = 1

    def to_dict(self):
        return dict(self.__dict__)


def _digits(q, precisions, switch):
    return precisions[0] if q < switch else precisions[1]


def mfe_select(graph, q_max, t=5, seed=0, precisions=(3, 2), switch=3, keep_states=False):
    """Smallest q after which the minimum free energy stops decreasing.

    ``f_q`` and ``f_{q-1}`` are both rounded to ``precisions[0]`` decimals
    when the candidate ``q < switch`` and to ``precisions[1]`` otherwise; the
    loop stops at the first ``q`` with rounded ``f_q >= f_{q-1}`` and returns
    ``q - 1``.
    """
    if q_max < 1:
        raise ValueError("q_max must be >= 1")
    trace = OrderSelectionTrace()
    states = {}
    prev = None
    q_star = q_max
    for q in range(1, q_max + 1):
        state, _ = em_fit(graph, q, t, _child(seed, q))
        states[q] = state
        f = state.free_energy
        trace.q.append(q)
        trace.f_min.append(f)
        trace.converged.append(bool(state.converged))
        trace.monotone.append(bool(state.em.monotone))
        digits = _digits(q, precisions, switch)
        trace.rounded.append(round(f, digits))
        if prev is None:
            trace.compared_to.append(None)
            trace.decision.append("continue")
        else:
            before = round(prev, digits)
            trace.compared_to.append(before)
            if round(f, digits) >= before:
                trace.decision.append("stop")
                q_star = q - 1
                break
            trace.decision.append("continue")
        prev = f
    else:
        trace.decision[-1] = "cap"
    trace.q_star = q_star
    if keep_states:
        return q_star, trace, states
    return q_star, trace


@dataclass
class BPDiagnostics:
    q: int
    trace: OrderSelectionTrace
    converged: bool
    params: dict

    def to_dict(self):
        return {"q": self.q, "trace": self.trace.to_dict(), "converged": self.converged,
                "params": self.params}


def detect_bp(graph, q_max=6, t=5, seed=0, precisions=(3, 2), switch=3):
    """Order selection by free energy, then argmax of the BP marginals at
    the chosen order."""
    q, trace, states = mfe_select(graph, q_max, t, seed, precisions, switch, keep_states=True)
    state = states[q]
    part = state.partition()
    return part, BPDiagnostics(q, trace, bool(state.converged), state.em.params.to_dict())
