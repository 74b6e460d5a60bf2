"""Label-correlation head: a GNN over a fully connected graph of categories.

Node ``v`` starts from the one-hot-scaled classifier score ``x_v * e_v``.
Each of ``steps`` rounds averages ``ReLU(W_M h_u + b_M)`` over all other
nodes and feeds that message to a GRU shared by every node and round. The
score for category ``v`` is coordinate ``v`` of ``h_v^0 + h_v^T``.
"""
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DomainError, ShapeError, StateError
from .nn import GRU_FIELDS, GruParams, glorot_uniform, gru_cell, relu


@dataclass
class GnnParams:
    W_M: np.ndarray
    b_M: np.ndarray
    gru: GruParams
    steps: int = 3

    def __post_init__(self):
        C = self.b_M.shape[0]
        if self.W_M.shape != (C, C):
            raise ShapeError(f"W_M must be {C}x{C}, got {self.W_M.shape}")
        if self.gru.hidden_size != C:
            raise ShapeError("GRU hidden size must equal the number of categories")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")

    @property
    def num_classes(self):
        return self.b_M.shape[0]

    @classmethod
    def init(cls, C, rng, steps=3):
        return cls(glorot_uniform(rng, C, C), np.zeros(C), GruParams.init(C, rng), steps)

    @classmethod
    def zeros(cls, C, steps=3):
        return cls(np.zeros((C, C)), np.zeros(C), GruParams.zeros(C), steps)

    def named(self):
        return [("W_M", self.W_M), ("b_M", self.b_M)] + self.gru.named()


def init_hidden(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("init_hidden expects a single score vector")
    if x.shape[0] < 2:
        raise DomainError("the category graph needs at least two nodes")
    return np.diag(x)


def message_update(H, params):
    """Average of ``ReLU(W_M h_u + b_M)`` over every node ``u != v``, row ``v``."""
    H = np.asarray(H, dtype=np.float64)
    C = params.num_classes
    if H.shape != (C, C):
        raise ShapeError(f"hidden states must be {C}x{C}, got {H.shape}")
    if C < 2:
        raise DomainError("the category graph needs at least two nodes")
    p = relu(H @ params.W_M.T + params.b_M)
    return (p.sum(axis=0, keepdims=True) - p) / (C - 1)


def gnn_forward_reference(x, params):
    """Unbatched forward built from :func:`message_update` and :func:`gru_cell`."""
    H0 = init_hidden(x)
    H = H0
    for _ in range(params.steps):
        H = gru_cell(params.gru, H, message_update(H, params))
    return np.diag(H0 + H).copy()


@dataclass
class GnnCache:
    x: np.ndarray
    Hs: np.ndarray
    A: np.ndarray
    M: np.ndarray
    Z: np.ndarray
    R: np.ndarray
    HT: np.ndarray


def _kernel_args(params):
    g = params.gru
    return (params.W_M, params.b_M, g.W_z, g.U_z, g.b_z, g.W_r, g.U_r, g.b_r,
            g.W_h, g.U_h, g.b_h)


def gnn_forward(x, params, return_cache=False, kernel=None):
    """Scores for one vector ``(C,)`` or a batch ``(B, C)``."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.ascontiguousarray(np.atleast_2d(x))
    C = params.num_classes
    if X.shape[1] != C:
        raise ShapeError(f"expected {C} scores per row, got {X.shape[1]}")
    if C < 2:
        raise DomainError("the category graph needs at least two nodes")
    kernel = kernel or _kernels.gnn_forward_kernel
    scores, Hs, A, M, Z, R, HT = kernel(X, *_kernel_args(params), int(params.steps))
    out = scores[0] if single else scores
    if return_cache:
        return out, GnnCache(X, Hs, A, M, Z, R, HT)
    return out


def gnn_backward(params, cache, dscores, kernel=None):
    """Return ``(grads, dx)``; ``grads`` is a GnnParams holding gradients."""
    if cache is None:
        raise StateError("gnn_backward called without a cached forward pass")
    ds = np.asarray(dscores, dtype=np.float64)
    single = ds.ndim == 1
    ds = np.ascontiguousarray(np.atleast_2d(ds))
    if ds.shape != cache.x.shape:
        raise ShapeError(f"upstream gradient {ds.shape} does not match forward {cache.x.shape}")
    g = params.gru
    kernel = kernel or _kernels.gnn_backward_kernel
    out = kernel(ds, params.W_M, g.W_z, g.U_z, g.W_r, g.U_r, g.W_h, g.U_h,
                 cache.Hs, cache.A, cache.M, cache.Z, cache.R, cache.HT)
    dx, gW_M, gb_M = out[:3]
    gru_grads = GruParams(**dict(zip(GRU_FIELDS, out[3:])))
    grads = GnnParams(gW_M, gb_M, gru_grads, params.steps)
    return grads, (dx[0] if single else dx)
