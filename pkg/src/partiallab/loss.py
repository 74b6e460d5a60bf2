"""Partial binary cross-entropy and the label-proportion normalization ``g``.

``g(p) = alpha * p**gamma + beta`` rescales each example's loss by how many
of its labels are known. The value returned here is the quantity to
minimize, i.e. the negative log-likelihood.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError, SingularConstraintError
from .nn import log_sigmoid, sigmoid


@dataclass(frozen=True)
class GNorm:
    alpha: float
    beta: float
    gamma: float = 1.0

    @classmethod
    def constant(cls):
        """``g == 1``: plain BCE normalized by the number of classes."""
        return cls(0.0, 1.0, 1.0)

    def __call__(self, p):
        return g_eval(self, p)


def solve_g_params(gamma, p0, g0):
    """Return the GNorm with ``g(1) = 1`` and ``g(p0) = g0``."""
    denom = p0 ** gamma - 1.0
    if denom == 0.0:
        raise SingularConstraintError(f"p0**gamma == 1 for p0={p0}, gamma={gamma}")
    alpha = (g0 - 1.0) / denom
    return GNorm(alpha, 1.0 - alpha, gamma)


def g_eval(g, p):
    p_arr = np.asarray(p, dtype=np.float64)
    if np.any(p_arr < 0):
        raise DomainError("label proportion must be non-negative")
    if g.gamma < 0 and np.any(p_arr == 0):
        raise DomainError("g is undefined at p = 0 for negative gamma")
    if g.alpha == 0.0:
        val = np.full(p_arr.shape, float(g.beta))
    else:
        val = g.alpha * p_arr ** g.gamma + g.beta
    return float(val) if val.ndim == 0 else val


def check_labels(y):
    y = np.asarray(y)
    if not np.all((y == -1) | (y == 0) | (y == 1)):
        raise DomainError("labels must be in {-1, 0, +1}")
    return y


def label_proportion(y):
    y = np.asarray(y)
    if y.shape[-1] == 0:
        raise DomainError("empty label vector")
    return np.count_nonzero(y, axis=-1) / y.shape[-1]


def partial_bce(x, y, g):
    """Loss and gradient w.r.t. ``x`` for one example or a batch of rows.

    For a batch ``(N, C)`` the per-row losses (shape ``(N,)``) and the
    per-row gradients are returned; rows with no known label give zero.
    """
    x = np.asarray(x, dtype=np.float64)
    y = check_labels(y)
    if x.shape != y.shape:
        raise ShapeError(f"scores {x.shape} and labels {y.shape} differ")
    single = x.ndim == 1
    x2, y2 = np.atleast_2d(x), np.atleast_2d(y)
    C = x2.shape[1]
    p = label_proportion(y2)
    known = p > 0
    weight = np.zeros(len(p))
    if known.any():
        weight[known] = g_eval(g, p[known])
    pos = y2 == 1
    neg = y2 == -1
    # log(1 - sigmoid(x)) == log_sigmoid(-x)
    nll = -(np.where(pos, log_sigmoid(x2), 0.0) + np.where(neg, log_sigmoid(-x2), 0.0))
    # g * sum / C keeps the g == 1 case bit-identical to a plain class mean
    loss = weight * nll.sum(axis=1) / C
    grad = weight[:, None] * np.where(pos | neg, sigmoid(x2) - pos, 0.0) / C
    if single:
        return float(loss[0]), grad[0]
    return loss, grad


def bce(x, y):
    """Reference binary cross-entropy over fully known ``y`` in {-1, +1}, averaged over classes."""
    x = np.asarray(x, dtype=np.float64)
    t = (np.asarray(y) == 1).astype(np.float64)
    p = sigmoid(x)
    return float(-np.mean(t * np.log(p) + (1 - t) * np.log1p(-p)))
