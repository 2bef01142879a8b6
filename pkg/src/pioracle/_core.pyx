# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: permutation-mixture posteriors, one data row at a time.

Each row computes the K arrangement log-weights, then accumulates the
weight of every (coordinate, atom) pair in one pass; the four marginals are
read off that small table. Arrangements more than ``_CUTOFF`` below the
row maximum are skipped: each contributes less than exp(-50) relative to the
total, far below double round-off even summed over 10! terms.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()

cdef double _CUTOFF = 50.0


cdef inline double _fill_loglik(const double* z, const double* At, const double* base, double inv_var,
                                Py_ssize_t K, Py_ssize_t n, double* ll) noexcept nogil:
    # ll[k] = base[k] + inv_var * <z, a_k>, At is A transposed (n, K) so the k loop is contiguous
    cdef Py_ssize_t k, i
    cdef double c, mx = -1e308
    cdef const double* col
    for k in range(K):
        ll[k] = base[k]
    for i in range(n):
        c = inv_var * z[i]
        col = At + i * K
        for k in range(K):
            ll[k] += c * col[k]
    for k in range(K):
        if ll[k] > mx:
            mx = ll[k]
    return mx


cdef void _row(const double* z, const double* At, const double* base, const int* idx, Py_ssize_t J,
               const double* atoms, const double* atom_null, double inv_var, Py_ssize_t K, Py_ssize_t n,
               double* ll, double* P, double* q, double* pp, double* pn, double* mean,
               double* log_norm) noexcept nogil:
    # P[i, j] accumulates the weight of xi_i = atoms[j]; marginals follow from P
    cdef Py_ssize_t k, i, j
    cdef double mx, w, tot, zz, v
    cdef const int* row
    mx = _fill_loglik(z, At, base, inv_var, K, n, ll)
    for i in range(n * J):
        P[i] = 0.0
    tot = 0.0
    for k in range(K):
        if ll[k] < mx - _CUTOFF:
            continue
        w = exp(ll[k] - mx)
        tot += w
        row = idx + k * n
        for i in range(n):
            P[i * J + row[i]] += w
    w = 1.0 / tot
    zz = 0.0
    for i in range(n):
        q[i] = 0.0
        pp[i] = 0.0
        pn[i] = 0.0
        mean[i] = 0.0
        for j in range(J):
            v = P[i * J + j] * w
            mean[i] += v * atoms[j]
            q[i] += v * atom_null[j]
            if atoms[j] > 0.0:
                pp[i] += v
            elif atoms[j] < 0.0:
                pn[i] += v
        zz += z[i] * z[i]
    log_norm[0] = mx + log(tot) - 0.5 * inv_var * zz


def _prepare(A, log_mult, double inv_var):
    A = np.ascontiguousarray(A, dtype=np.float64)
    base = np.ascontiguousarray(np.asarray(log_mult, dtype=np.float64) - 0.5 * inv_var * np.einsum("ki,ki->k", A, A))
    return A, np.ascontiguousarray(A.T), base


def posterior_batch(Z, A, log_mult, double inv_var, null_mask):
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    A, At, base = _prepare(A, log_mult, inv_var)
    atoms, first, inverse = np.unique(A, return_index=True, return_inverse=True)
    idx = np.ascontiguousarray(inverse.reshape(A.shape), dtype=np.intc)
    atom_null = np.ascontiguousarray(np.asarray(null_mask, dtype=np.float64).ravel()[first])
    atoms = np.ascontiguousarray(atoms, dtype=np.float64)
    cdef const double[:, ::1] Zv = Z
    cdef const double[:, ::1] Av = A
    cdef const double[:, ::1] Atv = At
    cdef const double[::1] bv = base, atv = atoms, anv = atom_null
    cdef const int[:, ::1] iv = idx
    cdef Py_ssize_t D = Zv.shape[0], n = Zv.shape[1], K = Av.shape[0], J = atoms.shape[0], d
    q = np.empty((D, n))
    pp = np.empty((D, n))
    pn = np.empty((D, n))
    mean = np.empty((D, n))
    log_norm = np.empty(D)
    ll = np.empty(max(K, 1))
    P = np.empty(max(n * J, 1))
    cdef double[:, ::1] qv = q, ppv = pp, pnv = pn, mv = mean
    cdef double[::1] lnv = log_norm, llv = ll, Pv = P
    if D == 0 or n == 0:
        return q, pp, pn, mean, log_norm
    with nogil:
        for d in range(D):
            _row(&Zv[d, 0], &Atv[0, 0], &bv[0], &iv[0, 0], J, &atv[0], &anv[0], inv_var, K, n,
                 &llv[0], &Pv[0], &qv[d, 0], &ppv[d, 0], &pnv[d, 0], &mv[d, 0], &lnv[d])
    return q, pp, pn, mean, log_norm


def log_mixture_batch(Z, A, log_mult, double inv_var):
    """logsumexp_k(log_mult[k] - |z - a_k|^2 * inv_var / 2) for every row of Z."""
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    A, At, base = _prepare(A, log_mult, inv_var)
    cdef const double[:, ::1] Zv = Z
    cdef const double[:, ::1] Av = A
    cdef const double[:, ::1] Atv = At
    cdef const double[::1] bv = base
    cdef Py_ssize_t D = Zv.shape[0], n = Zv.shape[1], K = Av.shape[0], d, k, i
    out = np.empty(D)
    ll = np.empty(max(K, 1))
    cdef double[::1] ov = out, llv = ll
    cdef double mx, tot, zz
    if D == 0 or n == 0:
        return out
    with nogil:
        for d in range(D):
            mx = _fill_loglik(&Zv[d, 0], &Atv[0, 0], &bv[0], inv_var, K, n, &llv[0])
            tot = 0.0
            for k in range(K):
                if llv[k] >= mx - _CUTOFF:
                    tot += exp(llv[k] - mx)
            zz = 0.0
            for i in range(n):
                zz += Zv[d, i] * Zv[d, i]
            ov[d] = mx + log(tot) - 0.5 * inv_var * zz
    return out
