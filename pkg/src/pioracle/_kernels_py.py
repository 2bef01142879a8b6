"""Pure numpy implementation of the hot kernels.

Selected automatically when the compiled ``_core`` extension is missing, or
when ``PI_ORACLE_PURE=1`` is set.
"""
import numpy as np

# rows of Z processed per block; bounds the (block, K) work matrix to ~32 MB
_BLOCK_ELEMS = 1 << 22


def posterior_batch(Z, A, log_mult, inv_var, null_mask):
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    A = np.ascontiguousarray(A, dtype=np.float64)
    D, n = Z.shape
    K = A.shape[0]
    null_f = np.asarray(null_mask, dtype=np.float64)
    pos_f = (A > 0).astype(np.float64)
    neg_f = (A < 0).astype(np.float64)
    # per-arrangement constant: log multiplicity - |a|^2 / (2 sigma^2)
    base = np.asarray(log_mult, dtype=np.float64) - 0.5 * inv_var * np.einsum("ki,ki->k", A, A)

    q = np.empty((D, n))
    pp = np.empty((D, n))
    pn = np.empty((D, n))
    mean = np.empty((D, n))
    log_norm = np.empty(D)

    step = max(1, _BLOCK_ELEMS // max(K, 1))
    for start in range(0, D, step):
        zb = Z[start:start + step]
        L = inv_var * (zb @ A.T) + base
        mx = L.max(axis=1, keepdims=True)
        W = np.exp(L - mx)
        tot = W.sum(axis=1)
        W /= tot[:, None]
        sl = slice(start, start + zb.shape[0])
        q[sl] = W @ null_f
        pp[sl] = W @ pos_f
        pn[sl] = W @ neg_f
        mean[sl] = W @ A
        log_norm[sl] = mx[:, 0] + np.log(tot) - 0.5 * inv_var * np.einsum("di,di->d", zb, zb)
    return q, pp, pn, mean, log_norm


def log_mixture_batch(Z, A, log_mult, inv_var):
    """logsumexp_k(log_mult[k] - |z - a_k|^2 * inv_var / 2) for every row of Z."""
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    A = np.ascontiguousarray(A, dtype=np.float64)
    D = Z.shape[0]
    K = A.shape[0]
    base = np.asarray(log_mult, dtype=np.float64) - 0.5 * inv_var * np.einsum("ki,ki->k", A, A)
    out = np.empty(D)
    step = max(1, _BLOCK_ELEMS // max(K, 1))
    for start in range(0, D, step):
        zb = Z[start:start + step]
        L = inv_var * (zb @ A.T) + base
        mx = L.max(axis=1)
        out[start:start + zb.shape[0]] = (
            mx + np.log(np.exp(L - mx[:, None]).sum(axis=1)) - 0.5 * inv_var * np.einsum("di,di->d", zb, zb)
        )
    return out
