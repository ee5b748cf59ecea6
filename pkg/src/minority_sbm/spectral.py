"""Bethe Hessian spectral clustering.

The number of communities is the count of negative eigenvalues of
``BH(+eta)`` plus that of ``BH(-eta)``, with ``eta = sqrt(mean degree)``.
The eigenvectors belonging to those eigenvalues are stacked column-wise
and their rows clustered by k-means.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigsh, splu
from sklearn.cluster import KMeans
from threadpoolctl import threadpool_limits

from .errors import SolverError
from .graphgen import Partition, make_rng

__all__ = [
    "BetheHessian",
    "EigenPairs",
    "bethe_hessian",
    "lowest_eigenpairs",
    "negative_count",
    "zero_tolerance",
    "kmeans",
    "BHDiagnostics",
    "detect_bh",
    "bh_partition_at",
]

DENSE_LIMIT = 500
RESIDUAL_TOL = 1e-8
KMEANS_RESTARTS = 10
KMEANS_MAX_ITER = 300
KMEANS_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class BetheHessian:
    eta: float
    matrix: sp.csr_matrix
    max_degree: int = 0

    @property
    def n(self):
        return self.matrix.shape[0]

    def norm_bound(self):
        """Gershgorin bound on the spectral norm (cheap, never below the true
        norm)."""
        if self.n == 0:
            return 0.0
        return float(abs(self.matrix).sum(axis=1).max())


def bethe_hessian(graph, eta):
    a = graph.adjacency
    deg = np.asarray(a.sum(axis=1)).ravel()
    eta = float(eta)
    h = sp.diags(eta * eta - 1.0 + deg, format="csr") - eta * a
    return BetheHessian(eta, h.tocsr(), int(deg.max(initial=0)))


def zero_tolerance(bh):
    """Eigenvalues below this count as negative: 1e-10 times the largest
    diagonal entry."""
    return 1e-10 * max(abs(bh.eta * bh.eta - 1.0 + bh.max_degree), 1.0)


@dataclass(frozen=True, eq=False)
class EigenPairs:
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray

    def __len__(self):
        return self.values.size


def _pairs(h, values, vectors):
    order = np.argsort(values, kind="stable")
    values, vectors = values[order], vectors[:, order]
    res = np.linalg.norm(h @ vectors - vectors * values, axis=0)
    return EigenPairs(values, vectors, res)


def lowest_eigenpairs(bh, k, dense_limit=DENSE_LIMIT, maxiter=None):
    """The ``k`` algebraically smallest eigenpairs.

    Dense LAPACK below ``dense_limit`` nodes (or when ``k`` is a large share
    of ``n``), ARPACK Lanczos otherwise.  Raises ``SolverError`` if any
    residual exceeds ``1e-8 * ||BH||``.
    """
    n = bh.n
    if k < 0 or k > n:
        raise ValueError(f"k must lie in 0..{n}, got {k}")
    if k == 0:
        return EigenPairs(np.empty(0), np.empty((n, 0)), np.empty(0))
    h = bh.matrix
    scale = max(bh.norm_bound(), 1.0)
    if n <= dense_limit or k >= n // 3:
        vals, vecs = scipy.linalg.eigh(h.toarray(), subset_by_index=[0, k - 1])
        pairs = _pairs(h, vals, vecs)
    else:
        # deterministic start vector keeps the whole pipeline seed-free here
        v0 = np.random.default_rng(0).standard_normal(n)
        try:
            vals, vecs = eigsh(h, k=k, which="SA", tol=1e-12, v0=v0,
                               ncv=min(n, max(2 * k + 1, 20)),
                               maxiter=maxiter or 100 * n)
        except ArpackNoConvergence as exc:
            best = None
            if exc.eigenvectors is not None and exc.eigenvectors.shape[1]:
                r = h @ exc.eigenvectors - exc.eigenvectors * exc.eigenvalues
                best = float(np.linalg.norm(r, axis=0).max())
            raise SolverError(f"Lanczos did not converge for k={k}", best) from exc
        pairs = _pairs(h, vals, vecs)
    worst = float(pairs.residuals.max())
    if worst > RESIDUAL_TOL * scale:
        raise SolverError(f"eigen-residual {worst:.3e} exceeds {RESIDUAL_TOL * scale:.3e}", worst)
    return pairs


def _inertia_lu(h, shift):
    m = (h - shift * sp.identity(h.shape[0], format="csr")).tocsc()
    lu = splu(m, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
              options=dict(SymmetricMode=True))
    # Without row pivoting the factorization is P A P^T = L U with L unit
    # lower triangular, so sign(diag U) gives the inertia (Sylvester).
    if not np.array_equal(lu.perm_r, lu.perm_c):
        return None
    d = lu.U.diagonal()
    if not np.all(np.isfinite(d)) or np.any(d == 0):
        return None
    return int(np.count_nonzero(d < 0))


def negative_count(bh, fallback_block=8):
    """Number of eigenvalues of ``BH`` below the zero tolerance.

    Uses the inertia of a symmetric LU factorization of ``BH - tau I``.  If
    the factorization pivots off the diagonal or breaks down, eigenvalues are
    computed instead (dense for small ``n``, growing Lanczos blocks
    otherwise) and compared against the same tolerance.
    """
    n = bh.n
    if n == 0:
        return 0
    tau = zero_tolerance(bh)
    if n > 1:
        try:
            count = _inertia_lu(bh.matrix, tau)
        except RuntimeError:
            count = None
        if count is not None:
            return count
    if n <= DENSE_LIMIT:
        return int(np.count_nonzero(np.linalg.eigvalsh(bh.matrix.toarray()) < tau))
    k = fallback_block
    while True:
        k = min(k, n)
        pairs = lowest_eigenpairs(bh, k)
        count = int(np.count_nonzero(pairs.values < tau))
        if count < k or k == n:
            return count
        k *= 2


def kmeans(rows, q, seed, restarts=KMEANS_RESTARTS):
    """Lloyd's k-means with k-means++ seeding, best of ``restarts`` by
    within-cluster sum of squares."""
    x = np.asarray(rows, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if q < 1:
        raise ValueError("q must be >= 1")
    if q > n:
        raise ValueError(f"cannot form {q} clusters from {n} points")
    if q == 1:
        return Partition(np.zeros(n, dtype=np.int64), 1)
    state = int(make_rng(seed).integers(2**31 - 1))
    km = KMeans(n_clusters=q, init="k-means++", n_init=restarts, max_iter=KMEANS_MAX_ITER,
                tol=KMEANS_TOL, random_state=state, algorithm="lloyd")
    with threadpool_limits(1):
        labels = km.fit_predict(x)
    return Partition(labels.astype(np.int64), q)


@dataclass
class BHDiagnostics:
    eta: float
    q_plus: int
    q_minus: int
    q: int
    tolerance: float
    eigenvalues_plus: list = field(default_factory=list)
    eigenvalues_minus: list = field(default_factory=list)
    floored: bool = False

    def to_dict(self):
        return dict(self.__dict__)


def _embedding(graph, eta, q_plus, q_minus):
    cols, vp, vm = [], np.empty(0), np.empty(0)
    if q_plus:
        pairs = lowest_eigenpairs(bethe_hessian(graph, eta), q_plus)
        cols.append(pairs.vectors)
        vp = pairs.values
    if q_minus:
        pairs = lowest_eigenpairs(bethe_hessian(graph, -eta), q_minus)
        cols.append(pairs.vectors)
        vm = pairs.values
    return cols, vp, vm


def detect_bh(graph, seed):
    """Bethe Hessian clustering with the community count read off the
    inertia of ``BH(+eta)`` and ``BH(-eta)``."""
    if graph.n == 0:
        raise ValueError("graph has no nodes")
    eta = float(np.sqrt(graph.mean_degree()))
    if graph.m == 0:
        # eta = 0 gives BH = -I, whose n negative eigenvalues carry no structure
        diag = BHDiagnostics(eta, 0, 0, 1, 0.0, floored=True)
        return Partition(np.zeros(graph.n, dtype=np.int64), 1), diag
    bh_p, bh_m = bethe_hessian(graph, eta), bethe_hessian(graph, -eta)
    q_plus, q_minus = negative_count(bh_p), negative_count(bh_m)
    q = q_plus + q_minus
    diag = BHDiagnostics(eta, q_plus, q_minus, max(q, 1), zero_tolerance(bh_p), floored=q == 0)
    if q <= 1:
        # one informative vector carries no split; k-means at q=1 is trivial
        return Partition(np.zeros(graph.n, dtype=np.int64), 1), diag
    cols, vp, vm = _embedding(graph, eta, q_plus, q_minus)
    diag.eigenvalues_plus = vp.tolist()
    diag.eigenvalues_minus = vm.tolist()
    part = kmeans(np.hstack(cols), min(q, graph.n), seed)
    return part, diag


def bh_partition_at(graph, q, seed):
    """Bethe Hessian partition forced to ``q`` communities.

    Uses the ``q`` lowest eigenvectors of ``BH(+eta)``, which is what MDL
    order selection scores for each candidate count.
    """
    if q == 1:
        return Partition(np.zeros(graph.n, dtype=np.int64), 1)
    eta = float(np.sqrt(graph.mean_degree()))
    pairs = lowest_eigenpairs(bethe_hessian(graph, eta), min(q, graph.n))
    return kmeans(pairs.vectors, q, seed)
