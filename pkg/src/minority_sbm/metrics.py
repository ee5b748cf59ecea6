"""Partition comparison: entropy, mutual information, AMI, confusion matrices.

Logarithms are natural.  The expected mutual information uses the
hypergeometric model of a random permutation with both sets of cluster sizes
held fixed, and AMI is normalised by the larger of the two entropies.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import gammaln

from .errors import DimensionMismatch

__all__ = [
    "contingency",
    "entropy",
    "mutual_information",
    "expected_mutual_information",
    "ami",
    "ConfusionMatrix",
    "confusion_matrix",
]


def _labels(p):
    return np.asarray(getattr(p, "labels", p))


def contingency(a, b):
    """Counts ``n_ij`` of nodes with label i in ``a`` and j in ``b``; empty
    labels are dropped."""
    a, b = _labels(a), _labels(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"partitions cover {a.size} and {b.size} nodes")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max(initial=-1) + 1, bi.max(initial=-1) + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def _entropy_counts(counts):
    counts = counts[counts > 0].astype(np.float64)
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(-(p * np.log(p)).sum())


def entropy(p):
    return _entropy_counts(np.bincount(np.unique(_labels(p), return_inverse=True)[1]))


def _mi_table(table):
    n = table.sum()
    if n == 0:
        return 0.0
    nz = table > 0
    a = table.sum(axis=1, keepdims=True).astype(np.float64)
    b = table.sum(axis=0, keepdims=True).astype(np.float64)
    t = table.astype(np.float64)
    val = (t / n * np.log(n * t / (a * b), where=nz, out=np.zeros_like(t)))[nz].sum()
    return max(float(val), 0.0)


def mutual_information(a, b):
    return _mi_table(contingency(a, b))


def expected_mutual_information(a, b):
    """Expected MI between ``a`` and a uniformly random relabelling of ``b``
    that keeps both sets of cluster sizes."""
    return _emi_table(contingency(a, b))


def _emi_table(table):
    n = int(table.sum())
    rows = table.sum(axis=1)
    cols = table.sum(axis=0)
    if n == 0:
        return 0.0
    lg_n = gammaln(n + 1)
    total = 0.0
    for ai in rows:
        for bj in cols:
            lo = max(1, ai + bj - n)
            hi = min(ai, bj)
            if lo > hi:
                continue
            nij = np.arange(lo, hi + 1, dtype=np.float64)
            log_p = (gammaln(ai + 1) + gammaln(bj + 1) + gammaln(n - ai + 1) + gammaln(n - bj + 1)
                     - lg_n - gammaln(nij + 1) - gammaln(ai - nij + 1) - gammaln(bj - nij + 1)
                     - gammaln(n - ai - bj + nij + 1))
            term = nij / n * np.log(n * nij / (float(ai) * float(bj)))
            total += float((term * np.exp(log_p)).sum())
    return total


def ami(a, b):
    """Adjusted mutual information, max-normalised.

    When both partitions are single-cluster the ratio is 0/0; the result is
    then 1 if the partitions coincide (always true here) and 0 otherwise.
    """
    table = contingency(a, b)
    h_a = _entropy_counts(table.sum(axis=1))
    h_b = _entropy_counts(table.sum(axis=0))
    if h_a == 0 and h_b == 0:
        return 1.0
    mi = _mi_table(table)
    emi = _emi_table(table)
    denom = max(h_a, h_b) - emi
    if abs(denom) < 1e-15:
        return 1.0 if abs(mi - emi) < 1e-15 else 0.0
    return float((mi - emi) / denom)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Row-normalised planted-versus-detected proportions.

    ``counts[r, s]`` is the raw number of planted-``r`` nodes assigned to
    detected community ``column_order[s]``; columns are permuted to put as
    much mass on the diagonal as possible.
    """

    proportions: np.ndarray
    counts: np.ndarray
    column_order: tuple

    def to_dict(self):
        return {"proportions": self.proportions.tolist(), "counts": self.counts.tolist(),
                "column_order": list(self.column_order)}


def confusion_matrix(planted, detected, q_planted=None, q_detected=None):
    """Confusion matrix with rows for planted communities and columns for
    detected ones, matched by maximum-weight assignment."""
    a, b = _labels(planted), _labels(detected)
    if a.shape != b.shape:
        raise DimensionMismatch(f"partitions cover {a.size} and {b.size} nodes")
    qa = q_planted or getattr(planted, "q", None) or int(a.max()) + 1
    qb = q_detected or getattr(detected, "q", None) or int(b.max()) + 1
    counts = np.zeros((qa, qb), dtype=np.int64)
    np.add.at(counts, (a, b), 1)
    rows, cols = linear_sum_assignment(-counts)
    order = [int(c) for _, c in sorted(zip(rows, cols))]
    order += [c for c in range(qb) if c not in order]
    counts = counts[:, order]
    sums = counts.sum(axis=1, keepdims=True)
    props = np.divide(counts, sums, out=np.zeros(counts.shape), where=sums > 0)
    return ConfusionMatrix(props, counts, tuple(order))
