"""Batched GNN head kernels.

Each kernel exists twice: an explicit-loop version compiled with numba and
a vectorized numpy version. Both take the same flat arguments and return
the same arrays. The dispatchers at the bottom pick one per call from the
JIT flag and the number of classes.

Shapes: ``x`` is ``(B, C)``; hidden states are ``(T+1, B, C, C)`` with
node ``v`` in row ``v``; per-step caches are ``(T, B, C, C)``.
"""
import math

import numpy as np

from ._jit import USE_NUMBA, njit


@njit
def _sig(a):
    if a >= 0.0:
        return 1.0 / (1.0 + math.exp(-a))
    e = math.exp(a)
    return e / (1.0 + e)


@njit
def _affine_rows(X, Wt, bias, out):
    """``out[u] = bias + X[u] @ Wt`` with contiguous inner loops (Wt is W transposed)."""
    n, C = X.shape
    for u in range(n):
        for j in range(C):
            out[u, j] = bias[j]
        for k in range(C):
            xk = X[u, k]
            if xk != 0.0:
                for j in range(C):
                    out[u, j] += xk * Wt[k, j]


@njit
def _acc_rows(D, W, out):
    """``out[u] += D[u] @ W``."""
    n, C = D.shape
    for u in range(n):
        for j in range(C):
            d = D[u, j]
            if d != 0.0:
                for k in range(C):
                    out[u, k] += d * W[j, k]


@njit
def _acc_outer(D, X, out):
    """``out += D.T @ X`` (sum of per-row outer products)."""
    n, C = D.shape
    for u in range(n):
        for j in range(C):
            d = D[u, j]
            if d != 0.0:
                for k in range(C):
                    out[j, k] += d * X[u, k]


@njit
def gnn_forward_numba(x, W_M, b_M, W_z, U_z, b_z, W_r, U_r, b_r, W_h, U_h, b_h, T):
    B, C = x.shape
    inv = 1.0 / (C - 1)
    W_Mt = np.ascontiguousarray(W_M.T)
    W_zt = np.ascontiguousarray(W_z.T)
    U_zt = np.ascontiguousarray(U_z.T)
    W_rt = np.ascontiguousarray(W_r.T)
    U_rt = np.ascontiguousarray(U_r.T)
    W_ht = np.ascontiguousarray(W_h.T)
    U_ht = np.ascontiguousarray(U_h.T)
    zero = np.zeros(C)
    Hs = np.zeros((T + 1, B, C, C))
    A = np.empty((T, B, C, C))
    M = np.empty((T, B, C, C))
    Z = np.empty((T, B, C, C))
    R = np.empty((T, B, C, C))
    HT = np.empty((T, B, C, C))
    scores = np.empty((B, C))
    tot = np.empty(C)
    tmp = np.empty((C, C))
    rh = np.empty((C, C))
    for b in range(B):
        for v in range(C):
            Hs[0, b, v, v] = x[b, v]
        for t in range(T):
            h = Hs[t, b]
            a_ = A[t, b]
            m = M[t, b]
            z_ = Z[t, b]
            r_ = R[t, b]
            ht = HT[t, b]
            _affine_rows(h, W_Mt, b_M, a_)
            for j in range(C):
                tot[j] = 0.0
            for u in range(C):
                for j in range(C):
                    if a_[u, j] > 0.0:
                        tot[j] += a_[u, j]
            for v in range(C):
                for j in range(C):
                    a = a_[v, j]
                    m[v, j] = (tot[j] - (a if a > 0.0 else 0.0)) * inv
            _affine_rows(m, W_zt, b_z, z_)
            _affine_rows(h, U_zt, zero, tmp)
            for v in range(C):
                for j in range(C):
                    z_[v, j] = _sig(z_[v, j] + tmp[v, j])
            _affine_rows(m, W_rt, b_r, r_)
            _affine_rows(h, U_rt, zero, tmp)
            for v in range(C):
                for j in range(C):
                    r_[v, j] = _sig(r_[v, j] + tmp[v, j])
                    rh[v, j] = r_[v, j] * h[v, j]
            _affine_rows(m, W_ht, b_h, ht)
            _affine_rows(rh, U_ht, zero, tmp)
            hn = Hs[t + 1, b]
            for v in range(C):
                for j in range(C):
                    ht[v, j] = math.tanh(ht[v, j] + tmp[v, j])
                    z = z_[v, j]
                    hn[v, j] = (1.0 - z) * h[v, j] + z * ht[v, j]
        for v in range(C):
            scores[b, v] = x[b, v] + Hs[T, b, v, v]
    return scores, Hs, A, M, Z, R, HT


@njit
def gnn_backward_numba(ds, W_M, W_z, U_z, W_r, U_r, W_h, U_h, Hs, A, M, Z, R, HT):
    T = A.shape[0]
    B, C = ds.shape
    inv = 1.0 / (C - 1)
    dx = np.zeros((B, C))
    gW_M = np.zeros((C, C))
    gb_M = np.zeros(C)
    gW_z = np.zeros((C, C))
    gU_z = np.zeros((C, C))
    gb_z = np.zeros(C)
    gW_r = np.zeros((C, C))
    gU_r = np.zeros((C, C))
    gb_r = np.zeros(C)
    gW_h = np.zeros((C, C))
    gU_h = np.zeros((C, C))
    gb_h = np.zeros(C)
    dH = np.zeros((C, C))
    dh = np.zeros((C, C))
    dm = np.zeros((C, C))
    dz = np.zeros((C, C))
    dah = np.zeros((C, C))
    drh = np.zeros((C, C))
    dar = np.zeros((C, C))
    daz = np.zeros((C, C))
    rh = np.zeros((C, C))
    col = np.zeros(C)
    da = np.zeros((C, C))
    for b in range(B):
        dH[:, :] = 0.0
        for v in range(C):
            dH[v, v] = ds[b, v]
            dx[b, v] = ds[b, v]
        for t in range(T - 1, -1, -1):
            h = Hs[t, b]
            m = M[t, b]
            z_ = Z[t, b]
            r_ = R[t, b]
            ht_ = HT[t, b]
            for v in range(C):
                for j in range(C):
                    g = dH[v, j]
                    z = z_[v, j]
                    ht = ht_[v, j]
                    dz[v, j] = g * (ht - h[v, j])
                    dh[v, j] = g * (1.0 - z)
                    dah[v, j] = g * z * (1.0 - ht * ht)
                    rh[v, j] = r_[v, j] * h[v, j]
                    dm[v, j] = 0.0
                    drh[v, j] = 0.0
            _acc_outer(dah, m, gW_h)
            _acc_outer(dah, rh, gU_h)
            _acc_rows(dah, W_h, dm)
            _acc_rows(dah, U_h, drh)
            for v in range(C):
                for k in range(C):
                    r = r_[v, k]
                    dh[v, k] += drh[v, k] * r
                    dar[v, k] = drh[v, k] * h[v, k] * r * (1.0 - r)
                    z = z_[v, k]
                    daz[v, k] = dz[v, k] * z * (1.0 - z)
                    gb_h[k] += dah[v, k]
                    gb_r[k] += dar[v, k]
                    gb_z[k] += daz[v, k]
            _acc_outer(dar, m, gW_r)
            _acc_outer(dar, h, gU_r)
            _acc_outer(daz, m, gW_z)
            _acc_outer(daz, h, gU_z)
            _acc_rows(dar, W_r, dm)
            _acc_rows(daz, W_z, dm)
            _acc_rows(dar, U_r, dh)
            _acc_rows(daz, U_z, dh)
            for j in range(C):
                col[j] = 0.0
            for v in range(C):
                for j in range(C):
                    col[j] += dm[v, j]
            for u in range(C):
                for j in range(C):
                    if A[t, b, u, j] > 0.0:
                        da[u, j] = (col[j] - dm[u, j]) * inv
                    else:
                        da[u, j] = 0.0
                    gb_M[j] += da[u, j]
            _acc_outer(da, h, gW_M)
            _acc_rows(da, W_M, dh)
            dH[:, :] = dh
        for v in range(C):
            dx[b, v] += dH[v, v]
    return dx, gW_M, gb_M, gW_z, gU_z, gb_z, gW_r, gU_r, gb_r, gW_h, gU_h, gb_h


def _sigmoid(a):
    e = np.exp(-np.abs(a))
    return np.where(a >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def gnn_forward_numpy(x, W_M, b_M, W_z, U_z, b_z, W_r, U_r, b_r, W_h, U_h, b_h, T):
    B, C = x.shape
    idx = np.arange(C)
    Hs = np.zeros((T + 1, B, C, C))
    Hs[0][:, idx, idx] = x
    A = np.empty((T, B, C, C))
    M = np.empty((T, B, C, C))
    Z = np.empty((T, B, C, C))
    R = np.empty((T, B, C, C))
    HT = np.empty((T, B, C, C))
    for t in range(T):
        h = Hs[t]
        A[t] = h @ W_M.T + b_M
        p = np.maximum(A[t], 0.0)
        M[t] = (p.sum(axis=1, keepdims=True) - p) / (C - 1)
        m = M[t]
        Z[t] = _sigmoid(m @ W_z.T + h @ U_z.T + b_z)
        R[t] = _sigmoid(m @ W_r.T + h @ U_r.T + b_r)
        HT[t] = np.tanh(m @ W_h.T + (R[t] * h) @ U_h.T + b_h)
        Hs[t + 1] = (1.0 - Z[t]) * h + Z[t] * HT[t]
    scores = x + Hs[T][:, idx, idx]
    return scores, Hs, A, M, Z, R, HT


def gnn_backward_numpy(ds, W_M, W_z, U_z, W_r, U_r, W_h, U_h, Hs, A, M, Z, R, HT):
    T = A.shape[0]
    B, C = ds.shape
    idx = np.arange(C)

    def outer(d, a):
        return d.reshape(-1, C).T @ a.reshape(-1, C)

    def bsum(d):
        return d.reshape(-1, C).sum(axis=0)

    grads = {k: np.zeros((C, C)) for k in ("W_M", "W_z", "U_z", "W_r", "U_r", "W_h", "U_h")}
    grads.update({k: np.zeros(C) for k in ("b_M", "b_z", "b_r", "b_h")})
    dH = np.zeros((B, C, C))
    dH[:, idx, idx] = ds
    dx = ds.copy()
    for t in range(T - 1, -1, -1):
        h, m, z, r, ht = Hs[t], M[t], Z[t], R[t], HT[t]
        dz = dH * (ht - h)
        dh = dH * (1.0 - z)
        dah = dH * z * (1.0 - ht * ht)
        grads["W_h"] += outer(dah, m)
        grads["U_h"] += outer(dah, r * h)
        grads["b_h"] += bsum(dah)
        dm = dah @ W_h
        drh = dah @ U_h
        dh += drh * r
        dar = drh * h * r * (1.0 - r)
        daz = dz * z * (1.0 - z)
        grads["W_r"] += outer(dar, m)
        grads["U_r"] += outer(dar, h)
        grads["b_r"] += bsum(dar)
        grads["W_z"] += outer(daz, m)
        grads["U_z"] += outer(daz, h)
        grads["b_z"] += bsum(daz)
        dm += dar @ W_r + daz @ W_z
        dh += dar @ U_r + daz @ U_z
        dp = (dm.sum(axis=1, keepdims=True) - dm) / (C - 1)
        da = dp * (A[t] > 0.0)
        grads["W_M"] += outer(da, h)
        grads["b_M"] += bsum(da)
        dh += da @ W_M
        dH = dh
    dx = dx + dH[:, idx, idx]
    return (dx, grads["W_M"], grads["b_M"], grads["W_z"], grads["U_z"], grads["b_z"],
            grads["W_r"], grads["U_r"], grads["b_r"], grads["W_h"], grads["U_h"], grads["b_h"])


# The loop kernels beat batched BLAS only while C is small (see
# benchmarks/bench_gnn.py); above this size the numpy path is faster.
NUMBA_MAX_CLASSES = 12


def gnn_forward_kernel(x, *args):
    if USE_NUMBA and x.shape[1] <= NUMBA_MAX_CLASSES:
        return gnn_forward_numba(x, *args)
    return gnn_forward_numpy(x, *args)


def gnn_backward_kernel(ds, *args):
    if USE_NUMBA and ds.shape[1] <= NUMBA_MAX_CLASSES:
        return gnn_backward_numba(ds, *args)
    return gnn_backward_numpy(ds, *args)


def kernel_name(num_classes):
    return "numba" if USE_NUMBA and num_classes <= NUMBA_MAX_CLASSES else "numpy"
