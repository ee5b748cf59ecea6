"""Closed-form analytics for the minority-community stochastic block model.

Two parameterisations are supported:

* ``Scenario.CONSISTENT_POUT`` -- a planted partition with one intra-community
  probability ``p_in`` and one inter-community probability ``p_out``.
* ``Scenario.CONSISTENT_DEGREE`` -- ``p_out1`` between communities of the same
  size class and ``p_out2`` across classes, tuned so that minority and
  majority nodes share the expected degree ``d``.

All eigenvalues are reported in the units of the signal matrix ``Q = N Omega``
(i.e. ``n`` times the eigenvalues of ``Q / n``).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import InfeasibleParameters

__all__ = [
    "Scenario",
    "Phase",
    "MinorityModel",
    "EdgeProbabilities",
    "SpectrumReport",
    "DegreeReport",
    "edge_probabilities",
    "params_from_degree",
    "consistent_degree_params",
    "feasible_delta_range",
    "community_sizes",
    "affinity_matrix",
    "build_signal_matrix",
    "closed_form_spectrum",
    "snr",
    "classify_phase",
    "expected_degrees",
    "merged_signal_matrix",
    "merged_majority_spectrum",
    "constant_mode_eigenvalue",
    "constant_mode_determinant",
    "symmetric_snr",
]


class Scenario(str, enum.Enum):
    CONSISTENT_POUT = "consistent_pout"
    CONSISTENT_DEGREE = "consistent_degree"


class Phase(str, enum.Enum):
    UNDETECTABLE = "Undetectable"
    DETECTABLE = "Detectable"
    DISTINGUISHABLE = "Distinguishable"
    RESOLVABLE = "Resolvable"


class EdgeProbabilities(NamedTuple):
    p_in: float
    p_out1: float
    p_out2: float

    @property
    def p_out(self):
        return self.p_out1


# ---------------------------------------------------------------------------
# probability coefficients
#
# Every probability is affine in delta: p = d/n + slope * delta.  The formula
# helpers below only use +, -, *, / so they also accept fractions.Fraction.
# ---------------------------------------------------------------------------

def _size_weight(q_s, q_b, rho):
    """(1-rho)^2/q_b + rho^2/q_s, the probability that a random pair shares
    a community."""
    return (1 - rho) ** 2 / q_b + rho ** 2 / q_s


def _slopes(q_s, q_b, rho, scenario):
    """Return the delta-slopes of (p_in, p_out1, p_out2)."""
    if scenario == Scenario.CONSISTENT_POUT:
        s = _size_weight(q_s, q_b, rho)
        return 1 - s, -s, -s
    t = ((1 - rho) ** 2 / q_b - rho ** 2 / q_s) / (1 - 2 * rho)
    cross = rho * (1 - rho) * (q_s - q_b) / ((1 - 2 * rho) * q_s * q_b)
    return 1 - t, -t, cross


def _probabilities(n, q_s, q_b, rho, delta, d, scenario):
    base = d / n
    a_in, a_out1, a_out2 = _slopes(q_s, q_b, rho, scenario)
    if scenario == Scenario.CONSISTENT_POUT:
        p_out = base - _size_weight(q_s, q_b, rho) * delta
        return EdgeProbabilities(p_out + delta, p_out, p_out)
    return EdgeProbabilities(base + a_in * delta, base + a_out1 * delta,
                             base + a_out2 * delta)


_PROB_NAMES = ("p_in", "p_out1", "p_out2")


def _delta_bounds(n, q_s, q_b, rho, d, scenario):
    """Per-probability admissible delta intervals.

    Returns a list of ``(lo, hi, what_lo, what_hi)`` where ``what_*`` names the
    probability constraint that produces each bound.
    """
    base = d / n
    out = []
    names = _PROB_NAMES if scenario == Scenario.CONSISTENT_DEGREE else ("p_in", "p_out")
    slopes = _slopes(q_s, q_b, rho, scenario)[: len(names)]
    for name, a in zip(names, slopes):
        if a > 0:
            out.append((-base / a, (1 - base) / a, f"{name} >= 0", f"{name} <= 1"))
        elif a < 0:
            out.append(((1 - base) / a, -base / a, f"{name} <= 1", f"{name} >= 0"))
        else:
            out.append((-math.inf, math.inf, "", ""))
    return out


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MinorityModel:
    """Parameters of an SBM with ``q_s`` minority and ``q_b`` majority
    communities.

    The minority communities jointly hold a fraction ``rho`` of the ``n``
    nodes.  ``delta`` is ``p_in - p_out`` (``p_in - p_out1`` in the
    consistent-degree scenario) and ``d`` the target average degree.  All
    constraints, including that every edge probability lies in [0, 1], are
    checked on construction.
    """

    n: int
    q_s: int
    q_b: int
    rho: float
    delta: float
    d: float
    scenario: Scenario = Scenario.CONSISTENT_POUT

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        if int(self.n) != self.n or self.n < 2:
            raise InfeasibleParameters(f"n must be an integer >= 2, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        for name in ("q_s", "q_b"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise InfeasibleParameters(f"{name} must be an integer >= 1, got {v}")
            object.__setattr__(self, name, int(v))
        q = self.q_s + self.q_b
        if not 0 < self.rho < self.q_s / q:
            raise InfeasibleParameters(
                f"rho={self.rho} violates 0 < rho < q_s/(q_s+q_b) = {self.q_s / q:.6g}")
        if self.scenario == Scenario.CONSISTENT_DEGREE and not self.rho < 0.5:
            raise InfeasibleParameters(
                f"rho={self.rho} violates rho < 1/2 required by the consistent-degree scenario")
        if not 0 < self.d <= self.n - 1:
            raise InfeasibleParameters(f"d={self.d} violates 0 < d <= n-1 = {self.n - 1}")
        lo, hi, why_lo, why_hi = _joint_range(self)
        if lo > hi:
            raise InfeasibleParameters(
                f"empty feasible delta range: {why_lo} needs delta >= {lo:.6g} "
                f"but {why_hi} needs delta <= {hi:.6g}")
        if self.delta < lo:
            raise InfeasibleParameters(
                f"delta={self.delta:.6g} below feasible lower bound {lo:.6g} ({why_lo})")
        if self.delta > hi:
            raise InfeasibleParameters(
                f"delta={self.delta:.6g} above feasible upper bound {hi:.6g} ({why_hi})")

    @property
    def q(self):
        return self.q_s + self.q_b

    @property
    def epsilon(self):
        """Per-community size gap rho/q_s - (1-rho)/q_b (negative)."""
        return self.rho / self.q_s - (1 - self.rho) / self.q_b

    def with_(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        return {"n": self.n, "q_s": self.q_s, "q_b": self.q_b, "rho": self.rho,
                "delta": self.delta, "d": self.d, "scenario": self.scenario.value}

    @classmethod
    def from_dict(cls, data):
        return cls(**{k: data[k] for k in ("n", "q_s", "q_b", "rho", "delta", "d", "scenario")})


def _joint_range(model):
    bounds = _delta_bounds(model.n, model.q_s, model.q_b, model.rho, model.d, model.scenario)
    lo, why_lo = max((b[0], b[2]) for b in bounds)
    hi, why_hi = min((b[1], b[3]) for b in bounds)
    return lo, hi, why_lo, why_hi


def feasible_delta_range(model):
    """Interval of ``delta`` values keeping every probability in [0, 1].

    Only ``n, q_s, q_b, rho, d`` and the scenario of ``model`` are used; its
    own ``delta`` is ignored.
    """
    lo, hi, why_lo, why_hi = _joint_range(model)
    if lo > hi:
        raise InfeasibleParameters(f"empty feasible delta range ({why_lo} vs {why_hi})")
    return lo, hi


def is_feasible(n, q_s, q_b, rho, delta, d, scenario=Scenario.CONSISTENT_POUT):
    try:
        MinorityModel(n, q_s, q_b, rho, delta, d, scenario)
    except InfeasibleParameters:
        return False
    return True


def params_from_degree(model):
    """``p_in, p_out`` of the consistent-p_out scenario from ``d`` and ``delta``."""
    if model.scenario != Scenario.CONSISTENT_POUT:
        raise InfeasibleParameters("params_from_degree applies to the consistent-p_out scenario")
    return _probabilities(model.n, model.q_s, model.q_b, model.rho, model.delta,
                          model.d, model.scenario)


def consistent_degree_params(model):
    """``p_in, p_out1, p_out2`` giving every community the average degree ``d``."""
    if model.scenario != Scenario.CONSISTENT_DEGREE:
        raise InfeasibleParameters(
            "consistent_degree_params applies to the consistent-degree scenario")
    return _probabilities(model.n, model.q_s, model.q_b, model.rho, model.delta,
                          model.d, model.scenario)


def edge_probabilities(model):
    return _probabilities(model.n, model.q_s, model.q_b, model.rho, model.delta,
                          model.d, model.scenario)


def average_degree(model, probs=None):
    """Average degree implied by ``probs`` (inverse of params_from_degree)."""
    deg = expected_degrees(model, probs)
    return model.rho * deg.d_s + (1 - model.rho) * deg.d_b


class DegreeReport(NamedTuple):
    d_s: float
    d_b: float


def expected_degrees(model, probs=None):
    """Expected degree of a minority node and of a majority node."""
    p = edge_probabilities(model) if probs is None else probs
    n, rho, q_s, q_b = model.n, model.rho, model.q_s, model.q_b
    d_s = n * rho / q_s * (p.p_in - p.p_out1) + n * rho * p.p_out1 + n * (1 - rho) * p.p_out2
    d_b = n * (1 - rho) / q_b * (p.p_in - p.p_out1) + n * rho * p.p_out2 + n * (1 - rho) * p.p_out1
    return DegreeReport(d_s, d_b)


# ---------------------------------------------------------------------------
# signal matrix
# ---------------------------------------------------------------------------

def community_sizes(model):
    """Real-valued community sizes (minorities first)."""
    return model.n * np.array([model.rho / model.q_s] * model.q_s
                              + [(1 - model.rho) / model.q_b] * model.q_b)


_ROUNDING = 1e-15


def _check_probs(model, probs):
    # models on the edge of the feasible band can land a few ulps outside
    for name, p in zip(_PROB_NAMES, probs):
        if not -_ROUNDING <= p <= 1 + _ROUNDING:
            raise InfeasibleParameters(f"{name}={p} outside [0, 1]")
    if model.scenario == Scenario.CONSISTENT_POUT and probs.p_out1 != probs.p_out2:
        raise InfeasibleParameters("consistent-p_out scenario requires p_out1 == p_out2")


def affinity_matrix(model, probs=None):
    probs = edge_probabilities(model) if probs is None else EdgeProbabilities(*probs)
    _check_probs(model, probs)
    q_s, q = model.q_s, model.q
    cls = np.arange(q) >= q_s
    omega = np.where(cls[:, None] == cls[None, :], probs.p_out1, probs.p_out2)
    np.fill_diagonal(omega, probs.p_in)
    return np.clip(omega, 0.0, 1.0)


def build_signal_matrix(model, probs=None):
    """``Q = N Omega`` as a dense ``q x q`` array."""
    return community_sizes(model)[:, None] * affinity_matrix(model, probs)


# ---------------------------------------------------------------------------
# spectrum
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectrumReport:
    """Eigenvalues of the signal matrix, ordered and with multiplicities.

    ``lambdas[k]`` is the ``(value, multiplicity)`` pair of the ordinal
    eigenvalue ``lambda_{k+1}``; ``contrasts[k]`` names the community contrast
    it encodes.  Vanished eigenvalues (multiplicity 0) are dropped before
    ordinals are assigned.
    """

    lambdas: tuple
    contrasts: tuple
    discriminant: float
    phase: Phase

    @property
    def values(self):
        return tuple(v for v, _ in self.lambdas)

    @property
    def multiplicities(self):
        return tuple(m for _, m in self.lambdas)

    def ratio(self, k):
        """``lambda_k^2 / lambda_1`` for ordinal ``k`` (1-based) or None."""
        if k > len(self.lambdas):
            return None
        return self.lambdas[k - 1][0] ** 2 / abs(self.lambdas[0][0])

    @property
    def snr2(self):
        return self.ratio(2)

    @property
    def snr3(self):
        return self.ratio(3)

    @property
    def snr4(self):
        return self.ratio(4)

    @property
    def expected_q(self):
        """Number of signal-matrix eigenvalues (with multiplicity) whose
        ``lambda^2/lambda_1`` exceeds one, the leading eigenvalue included."""
        q = 1
        for k in range(2, len(self.lambdas) + 1):
            if self.ratio(k) > 1:
                q += self.lambdas[k - 1][1]
        return q

    def full_spectrum(self):
        """All eigenvalues repeated by multiplicity, descending by magnitude."""
        return np.array([v for v, m in self.lambdas for _ in range(m)])


def _phase_from_ratios(ratios):
    """Phase from the ordinal ratios [r2, r3, r4] (missing entries None)."""
    r = list(ratios) + [None] * (3 - len(ratios))
    if r[0] is None or r[0] <= 1:
        return Phase.UNDETECTABLE
    if r[1] is None or r[1] <= 1:
        return Phase.DETECTABLE
    if r[2] is None or r[2] <= 1:
        return Phase.DISTINGUISHABLE
    return Phase.RESOLVABLE


def _assemble(entries, discriminant, proved_order):
    kept = [e for e in entries if e[1] > 0]
    if not proved_order:
        kept = sorted(kept, key=lambda e: -abs(e[0]))
    lambdas = tuple((float(v), int(m)) for v, m, _ in kept)
    contrasts = tuple(c for _, _, c in kept)
    ratios = [v * v / abs(lambdas[0][0]) for v, _ in lambdas[1:4]]
    return SpectrumReport(lambdas, contrasts, float(discriminant), _phase_from_ratios(ratios))


def _pout_entries(n, q_s, q_b, rho, delta, p_out):
    eps = rho / q_s - (1 - rho) / q_b
    s = rho / q_s + (1 - rho) / q_b
    disc = p_out ** 2 + eps ** 2 * delta ** 2 + 2 * (2 * rho - 1) * p_out * delta * eps
    root = math.sqrt(max(disc, 0.0))
    a = s * delta + p_out
    # the pair solves mu^2 - a mu + c = 0; take the smaller root from the
    # product so it keeps its relative precision when delta is tiny
    c = rho * (1 - rho) * delta * (delta / (q_s * q_b) + p_out * (1 / q_s + 1 / q_b))
    big = (a + math.copysign(root, a)) / 2
    small = c / big if big != 0 else 0.0
    hi, lo = (big, small) if a >= 0 else (small, big)
    entries = [
        (n * hi, 1, "uniform"),
        (n * (1 - rho) / q_b * delta, q_b - 1, "majority"),
        (n * lo, 1, "mixed"),
        (n * rho / q_s * delta, q_s - 1, "minority"),
    ]
    return entries, disc


def closed_form_spectrum(model):
    """Closed-form eigenvalues of ``Q`` for either scenario.

    For assortative models the formula order is the eigenvalue order; for
    other models entries are ordered by magnitude.
    """
    n, rho, q_s, q_b, delta = model.n, model.rho, model.q_s, model.q_b, model.delta
    probs = edge_probabilities(model)
    if model.scenario == Scenario.CONSISTENT_POUT:
        entries, disc = _pout_entries(n, q_s, q_b, rho, delta, probs.p_out)
        return _assemble(entries, disc, proved_order=delta >= 0)
    mix = rho * (1 - rho) / (1 - 2 * rho)
    disc = (model.d / n + mix * (1 / q_b - 1 / q_s) * delta) ** 2
    entries = [
        (float(model.d), 1, "uniform"),
        (n * (1 - rho) / q_b * delta, q_b - 1, "majority"),
        (n * rho / q_s * delta, q_s - 1, "minority"),
        (mix * (1 / q_s - 1 / q_b) * n * delta, 1, "mixed"),
    ]
    return _assemble(entries, disc, proved_order=delta >= 0 and q_s < q_b)


def snr(model):
    """``lambda_2^2 / lambda_1`` of the signal matrix."""
    return closed_form_spectrum(model).snr2


def snr_from_probabilities(n, q_s, q_b, rho, p_in, p_out):
    """Consistent-p_out SNR from raw parameters.

    Unlike :class:`MinorityModel` this accepts ``rho = q_s/q``, where all
    communities have the same size.
    """
    entries, disc = _pout_entries(n, q_s, q_b, rho, p_in - p_out, p_out)
    return _assemble(entries, disc, proved_order=p_in >= p_out).snr2


def classify_phase(model):
    return closed_form_spectrum(model).phase


def symmetric_snr(n, q, p_in, p_out):
    """``(d_in - d_out)^2 / d`` for the symmetric SBM with ``q`` equal groups."""
    d_in, d_out = n / q * p_in, n / q * p_out
    return (d_in - d_out) ** 2 / (d_in + (q - 1) * d_out)


# ---------------------------------------------------------------------------
# merged-majority heuristic (consistent degree)
# ---------------------------------------------------------------------------

def merged_signal_matrix(model):
    """Signal matrix after merging all majority communities into one block
    whose internal probability keeps the average degree unchanged."""
    if model.scenario != Scenario.CONSISTENT_DEGREE:
        raise InfeasibleParameters("merged-majority structure is defined for consistent degree")
    p = consistent_degree_params(model)
    q_s, q_b, n, rho = model.q_s, model.q_b, model.n, model.rho
    omega = np.full((q_s + 1, q_s + 1), p.p_out1)
    np.fill_diagonal(omega, p.p_in)
    omega[:q_s, q_s] = omega[q_s, :q_s] = p.p_out2
    omega[q_s, q_s] = (p.p_in + (q_b - 1) * p.p_out1) / q_b
    sizes = n * np.array([rho / q_s] * q_s + [1 - rho])
    return sizes[:, None] * omega


def merged_majority_spectrum(model):
    if model.scenario != Scenario.CONSISTENT_DEGREE:
        raise InfeasibleParameters("merged-majority spectrum is defined for consistent degree")
    n, rho, q_s, q_b, delta = model.n, model.rho, model.q_s, model.q_b, model.delta
    mix = rho * (1 - rho) / (1 - 2 * rho)
    entries = [
        (float(model.d), 1, "uniform"),
        (rho / q_s * n * delta, q_s - 1, "minority"),
        (mix * (1 / q_s - 1 / q_b) * n * delta, 1, "mixed"),
    ]
    disc = (model.d / n + mix * (1 / q_b - 1 / q_s) * delta) ** 2
    return _assemble(entries, disc, proved_order=delta >= 0)


# ---------------------------------------------------------------------------
# constant mode of the minority block
# ---------------------------------------------------------------------------

def constant_mode_eigenvalue(model, probs=None):
    """Eigenvalue of the uniform vector on the minority block of ``Q / n``."""
    p = edge_probabilities(model) if probs is None else probs
    return model.rho / model.q_s * (p.p_in - p.p_out + model.q_s * p.p_out)


def constant_mode_determinant(model, probs=None):
    """Closed form of ``det(Q/n - mu I)`` at the constant-mode eigenvalue ``mu``
    (consistent-p_out scenario)."""
    p = edge_probabilities(model) if probs is None else probs
    rho, q_s, q_b = model.rho, model.q_s, model.q_b
    delta = p.p_in - p.p_out
    gap = ((1 - rho) / q_b - rho / q_s) * delta - rho * p.p_out
    return -((-rho * p.p_out) ** (q_s - 1)) * gap ** (q_b - 1) * rho * (1 - rho) * p.p_out ** 2
