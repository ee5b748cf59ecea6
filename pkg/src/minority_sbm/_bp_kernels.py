"""Compiled inner loops for sparse-SBM belief propagation.

Directed edge ``e`` in CSR row ``i`` points to ``j = indices[e]`` and holds
the message from i to j; ``rev[e]`` is the edge j -> i.  ``c`` is the
rescaled affinity ``n * Omega`` and ``h`` the external field
``h_r = (1/N) sum_i sum_s c_rs marg_is``.
"""
import numpy as np
from numba import njit

FLOOR = 1e-300


@njit(cache=True)
def reverse_index(indptr, indices):
    n = indptr.size - 1
    rev = np.empty(indices.size, dtype=np.int64)
    for i in range(n):
        for e in range(indptr[i], indptr[i + 1]):
            j = indices[e]
            # rows are sorted, so bisect for i inside row j
            lo, hi = indptr[j], indptr[j + 1]
            while lo < hi:
                mid = (lo + hi) // 2
                if indices[mid] < i:
                    lo = mid + 1
                else:
                    hi = mid
            rev[e] = lo
    return rev


@njit(cache=True)
def _incoming(indptr, rev, psi, c, i, buf):
    """``buf[k, s] = sum_t c_st psi^{k->i}_t`` for each neighbour k, scaled
    so the row maximum is 1.  Returns the sum of the log scales."""
    q = c.shape[0]
    logscale = 0.0
    for k in range(indptr[i + 1] - indptr[i]):
        back = rev[indptr[i] + k]
        top = 0.0
        for s in range(q):
            acc = 0.0
            for t in range(q):
                acc += c[s, t] * psi[back, t]
            buf[k, s] = acc
            if acc > top:
                top = acc
        if top <= 0.0:
            top = FLOOR
        inv = 1.0 / top
        for s in range(q):
            buf[k, s] = max(buf[k, s] * inv, FLOOR)
        logscale += np.log(top)
    return logscale


@njit(cache=True)
def _node_products(indptr, buf, i, base, total, logbuf):
    """``total[s]`` proportional to ``base[s] * prod_k buf[k, s]``; falls
    back to logs if the product underflows.  Returns the log of the factor
    dropped by normalising ``total`` to a unit maximum."""
    q = total.size
    deg = indptr[i + 1] - indptr[i]
    for s in range(q):
        total[s] = base[s]
    for k in range(deg):
        for s in range(q):
            total[s] *= buf[k, s]
    top = 0.0
    for s in range(q):
        if total[s] > top:
            top = total[s]
    if top > 1e-250:
        for s in range(q):
            total[s] /= top
        return np.log(top)
    for s in range(q):
        acc = np.log(max(base[s], FLOOR))
        for k in range(deg):
            acc += np.log(buf[k, s])
        logbuf[s] = acc
    ltop = -np.inf
    for s in range(q):
        if logbuf[s] > ltop:
            ltop = logbuf[s]
    for s in range(q):
        total[s] = np.exp(logbuf[s] - ltop)
    return ltop


@njit(cache=True)
def sweep(indptr, indices, rev, psi, marg, h, c, nr, order, damp, buf):
    """One asynchronous pass over the nodes in ``order``.  Returns the
    largest absolute change of any message component."""
    q = c.shape[0]
    n = marg.shape[0]
    base = np.empty(q)
    total = np.empty(q)
    logbuf = np.empty(q)
    new = np.empty(q)
    worst = 0.0
    for i in order:
        start = indptr[i]
        deg = indptr[i + 1] - start
        _incoming(indptr, rev, psi, c, i, buf)
        hmin = h.min()
        for s in range(q):
            base[s] = nr[s] * np.exp(hmin - h[s])
        _node_products(indptr, buf, i, base, total, logbuf)
        for k in range(deg):
            e = start + k
            z = 0.0
            for s in range(q):
                # buf entries are at least FLOOR, so the division is safe
                new[s] = total[s] / buf[k, s]
                z += new[s]
            if not z > 0.0 or z == np.inf:
                # the cavity product cannot be recovered by division
                for s in range(q):
                    acc = np.log(max(base[s], FLOOR))
                    for kk in range(deg):
                        if kk != k:
                            acc += np.log(buf[kk, s])
                    logbuf[s] = acc
                top = logbuf.max()
                z = 0.0
                for s in range(q):
                    new[s] = np.exp(logbuf[s] - top)
                    z += new[s]
            inv = 1.0 / z
            for s in range(q):
                v = new[s] * inv
                if damp > 0.0:
                    v = (1.0 - damp) * v + damp * psi[e, s]
                d = abs(v - psi[e, s])
                if d > worst:
                    worst = d
                new[s] = v
            if damp > 0.0:
                z = 0.0
                for s in range(q):
                    z += new[s]
                inv = 1.0 / z
                for s in range(q):
                    new[s] *= inv
            for s in range(q):
                psi[e, s] = new[s]
        z = 0.0
        for s in range(q):
            z += total[s]
        for s in range(q):
            new[s] = total[s] / z
        for r in range(q):
            acc = 0.0
            for s in range(q):
                acc += c[r, s] * (new[s] - marg[i, s])
            h[r] += acc / n
        for s in range(q):
            marg[i, s] = new[s]
    return worst


@njit(cache=True)
def field_from_marginals(marg, c):
    n, q = marg.shape
    h = np.zeros(q)
    for i in range(n):
        for r in range(q):
            for s in range(q):
                h[r] += c[r, s] * marg[i, s]
    return h / n


@njit(cache=True)
def free_energy(indptr, indices, rev, psi, h, c, nr, cbar, buf):
    """Bethe free energy per node."""
    q = c.shape[0]
    n = indptr.size - 1
    base = np.empty(q)
    total = np.empty(q)
    logbuf = np.empty(q)
    node_part = 0.0
    edge_part = 0.0
    for i in range(n):
        logscale = _incoming(indptr, rev, psi, c, i, buf)
        hmin = h.min()
        for s in range(q):
            base[s] = nr[s] * np.exp(hmin - h[s])
        lt = _node_products(indptr, buf, i, base, total, logbuf)
        z = 0.0
        for s in range(q):
            z += total[s]
        node_part += np.log(z) + lt + logscale - hmin
        for e in range(indptr[i], indptr[i + 1]):
            if indices[e] <= i:
                continue
            back = rev[e]
            zij = 0.0
            for r in range(q):
                for s in range(q):
                    zij += c[r, s] * psi[e, r] * psi[back, s]
            edge_part += np.log(max(zij, FLOOR))
    return (-node_part + edge_part) / n - cbar / 2.0


@njit(cache=True)
def pair_counts(indptr, indices, rev, psi, c):
    """Expected number of edges whose endpoints sit in blocks (r, s),
    symmetrised; the diagonal counts each internal edge twice."""
    q = c.shape[0]
    n = indptr.size - 1
    out = np.zeros((q, q))
    p = np.empty((q, q))
    for i in range(n):
        for e in range(indptr[i], indptr[i + 1]):
            if indices[e] <= i:
                continue
            back = rev[e]
            z = 0.0
            for r in range(q):
                for s in range(q):
                    p[r, s] = c[r, s] * psi[e, r] * psi[back, s]
                    z += p[r, s]
            if z <= 0.0:
                continue
            for r in range(q):
                for s in range(q):
                    out[r, s] += (p[r, s] + p[s, r]) / z
    return out
