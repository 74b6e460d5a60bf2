"""Dense building blocks with hand-written backward passes.

Everything works on float64 numpy arrays. Batched inputs are row-major:
one example (or one graph node) per row.
"""
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ShapeError, StateError


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softplus(x):
    return np.logaddexp(0.0, x)


def log_sigmoid(x):
    return -softplus(-np.asarray(x, dtype=np.float64))


def relu(x):
    return np.maximum(x, 0.0)


def glorot_uniform(rng, fan_in, fan_out):
    """``fan_out x fan_in`` weight drawn from U(-limit, limit)."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return (2.0 * rng.uniform((fan_out, fan_in)) - 1.0) * limit


# ---------------------------------------------------------------------------
# MLP


@dataclass
class MlpParams:
    """Affine layers with ReLU between them (none after the last).

    ``weights[k]`` has shape ``(sizes[k+1], sizes[k])``.
    """

    weights: list
    biases: list

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ShapeError("need one bias per weight and at least one layer")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ShapeError(f"layer {k}: weight {w.shape} incompatible with bias {b.shape}")
            if k and w.shape[1] != self.weights[k - 1].shape[0]:
                raise ShapeError(f"layer {k}: expects {w.shape[1]} inputs, "
                                 f"previous layer gives {self.weights[k - 1].shape[0]}")

    @property
    def sizes(self):
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @classmethod
    def init(cls, sizes, rng):
        weights = [glorot_uniform(rng, a, b) for a, b in zip(sizes[:-1], sizes[1:])]
        biases = [np.zeros(b) for b in sizes[1:]]
        return cls(weights, biases)

    @classmethod
    def zeros(cls, sizes):
        return cls([np.zeros((b, a)) for a, b in zip(sizes[:-1], sizes[1:])],
                   [np.zeros(b) for b in sizes[1:]])

    def named(self):
        out = []
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            out += [(f"W{k}", w), (f"b{k}", b)]
        return out


@dataclass
class MlpCache:
    inputs: list
    pre: list


def mlp_forward(params, X, return_cache=False):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.sizes[0]:
        raise ShapeError(f"input shape {X.shape} does not match d_in={params.sizes[0]}")
    inputs, pre = [], []
    a = X
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(a)
        z = a @ w.T + b
        pre.append(z)
        a = relu(z) if k < last else z
    if return_cache:
        return a, MlpCache(inputs, pre)
    return a


def mlp_backward(params, cache, dout):
    """Return ``(grads, dX)`` where ``grads`` is an MlpParams of gradients."""
    if cache is None:
        raise StateError("mlp_backward called without a cached forward pass")
    g = np.asarray(dout, dtype=np.float64)
    gw = [None] * len(params.weights)
    gb = [None] * len(params.weights)
    for k in range(len(params.weights) - 1, -1, -1):
        if k < len(params.weights) - 1:
            g = g * (cache.pre[k] > 0)
        gw[k] = g.T @ cache.inputs[k]
        gb[k] = g.sum(axis=0)
        g = g @ params.weights[k]
    return MlpParams(gw, gb), g


# ---------------------------------------------------------------------------
# GRU

GRU_FIELDS = ("W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_h", "U_h", "b_h")


@dataclass
class GruParams:
    W_z: np.ndarray
    U_z: np.ndarray
    b_z: np.ndarray
    W_r: np.ndarray
    U_r: np.ndarray
    b_r: np.ndarray
    W_h: np.ndarray
    U_h: np.ndarray
    b_h: np.ndarray

    def __post_init__(self):
        H = self.b_z.shape[0]
        for name in GRU_FIELDS:
            arr = getattr(self, name)
            want = (H,) if name.startswith("b") else (H, H)
            if arr.shape != want:
                raise ShapeError(f"{name} has shape {arr.shape}, expected {want}")

    @property
    def hidden_size(self):
        return self.b_z.shape[0]

    @classmethod
    def zeros(cls, H):
        return cls(**{n: np.zeros(H) if n.startswith("b") else np.zeros((H, H))
                      for n in GRU_FIELDS})

    @classmethod
    def init(cls, H, rng):
        return cls(**{n: np.zeros(H) if n.startswith("b") else glorot_uniform(rng, H, H)
                      for n in GRU_FIELDS})

    def named(self):
        return [(n, getattr(self, n)) for n in GRU_FIELDS]


@dataclass
class GruCache:
    h: np.ndarray
    m: np.ndarray
    z: np.ndarray
    r: np.ndarray
    ht: np.ndarray


def gru_cell(params, h, m, return_cache=False):
    """One GRU update: ``h' = (1 - z) * h + z * h~``.

    ``h`` and ``m`` are vectors of length H or ``(B, H)`` batches.
    """
    h = np.asarray(h, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    H = params.hidden_size
    if h.shape != m.shape or h.shape[-1] != H:
        raise ShapeError(f"h {h.shape} and m {m.shape} must both end in hidden size {H}")
    p = params
    z = sigmoid(m @ p.W_z.T + h @ p.U_z.T + p.b_z)
    r = sigmoid(m @ p.W_r.T + h @ p.U_r.T + p.b_r)
    ht = np.tanh(m @ p.W_h.T + (r * h) @ p.U_h.T + p.b_h)
    out = (1.0 - z) * h + z * ht
    if return_cache:
        return out, GruCache(h, m, z, r, ht)
    return out


def gru_backward(params, cache, dout):
    """Return ``(grads, dh, dm)`` for a cached :func:`gru_cell` call."""
    if cache is None:
        raise StateError("gru_backward called without a cached forward pass")
    p = params
    h, m, z, r, ht = cache.h, cache.m, cache.z, cache.r, cache.ht
    g = np.asarray(dout, dtype=np.float64)
    h2, m2 = np.atleast_2d(h), np.atleast_2d(m)

    def outer(d, a):
        return np.atleast_2d(d).T @ a

    def bsum(d):
        return np.atleast_2d(d).sum(axis=0)

    dz = g * (ht - h)
    dh = g * (1.0 - z)
    dah = g * z * (1.0 - ht * ht)
    rh = r * h
    grads = {"W_h": outer(dah, m2), "U_h": outer(dah, np.atleast_2d(rh)), "b_h": bsum(dah)}
    dm = dah @ p.W_h
    drh = dah @ p.U_h
    dh = dh + drh * r
    dar = drh * h * r * (1.0 - r)
    grads.update(W_r=outer(dar, m2), U_r=outer(dar, h2), b_r=bsum(dar))
    dm = dm + dar @ p.W_r
    dh = dh + dar @ p.U_r
    daz = dz * z * (1.0 - z)
    grads.update(W_z=outer(daz, m2), U_z=outer(daz, h2), b_z=bsum(daz))
    dm = dm + daz @ p.W_z
    dh = dh + daz @ p.U_z
    return GruParams(**grads), dh, dm


# ---------------------------------------------------------------------------
# finite differences


def finite_diff(f, theta, eps=1e-5):
    """Central-difference gradient of scalar ``f`` at ``theta``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    theta = np.array(theta, dtype=np.float64)
    flat = theta.reshape(-1)
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        fp = f(theta)
        flat[i] = old - eps
        fm = f(theta)
        flat[i] = old
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"f is not finite around coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * eps)
    return grad.reshape(theta.shape)


def rel_error(a, b, floor=1e-12):
    """Norm-wise relative error ``|a-b| / max(|a|, |b|)``."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / denom)
