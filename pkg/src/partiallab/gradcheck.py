"""Finite-difference checks of every hand-written backward pass.

Each check draws random small instances, pushes a random upstream vector
``w`` through ``L = sum(w * output)`` and compares the analytic gradient of
every parameter block with central differences. A block's error is the
worst norm-wise relative error over all instances.
"""
from dataclasses import dataclass

import numpy as np

from . import gnn as gnn_mod
from .loss import partial_bce, solve_g_params
from .nn import (GruParams, MlpParams, finite_diff, gru_backward, gru_cell, mlp_backward,
                 mlp_forward, rel_error)
from .rng import Rng

EPS = 1e-5
TOL = 1e-5
LOSS_TOL = 1e-6


@dataclass
class BlockResult:
    name: str
    max_rel_error: float
    tolerance: float

    @property
    def passed(self):
        return self.max_rel_error <= self.tolerance


def _perturb(arrays, rng, scale=0.5):
    for a in arrays:
        a += scale * rng.normal(a.shape)


def _param_fd(f, arr):
    """Central differences of ``f()`` w.r.t. ``arr`` (mutated in place and restored)."""
    def wrapped(v):
        saved = arr.copy()
        arr[...] = v
        try:
            return f()
        finally:
            arr[...] = saved
    return finite_diff(wrapped, arr.copy(), EPS)


class _Tracker:
    def __init__(self):
        self.worst = {}

    def add(self, name, analytic, numeric, tol=TOL):
        err = rel_error(analytic, numeric)
        prev = self.worst.get(name)
        if prev is None or err > prev[0]:
            self.worst[name] = (err, tol)

    def results(self):
        return [BlockResult(n, e, t) for n, (e, t) in self.worst.items()]


def check_partial_bce(rng, n_instances, tracker):
    for _ in range(n_instances):
        C = 1 + rng.integers(6)
        gamma = [1.0, -1.0, 2.0][rng.integers(3)]
        g = solve_g_params(gamma, 0.1, 1.0 + 9.0 * rng.uniform())
        x = 3.0 * rng.normal((C,))
        y = rng.integers(3, size=(C,)) - 1
        if not y.any():
            y[0] = 1
        _, grad = partial_bce(x, y, g)
        numeric = finite_diff(lambda v: partial_bce(v, y, g)[0], x, EPS)
        tracker.add("partial_bce.x", grad, numeric, LOSS_TOL)


def check_mlp(rng, n_instances, tracker):
    for _ in range(n_instances):
        d = 1 + rng.integers(5)
        hidden = 1 + rng.integers(4)
        C = 1 + rng.integers(6)
        N = 1 + rng.integers(3)
        params = MlpParams.init([d, hidden, C], rng)
        _perturb(params.biases, rng, 0.3)
        X = rng.normal((N, d))
        w = rng.normal((N, C))
        _, cache = mlp_forward(params, X, return_cache=True)
        grads, dX = mlp_backward(params, cache, w)

        def loss():
            return float(np.sum(w * mlp_forward(params, X)))

        for (name, arr), (_, garr) in zip(params.named(), grads.named()):
            tracker.add(f"mlp.{name}", garr, _param_fd(loss, arr))
        tracker.add("mlp.x", dX, finite_diff(lambda v: float(np.sum(w * mlp_forward(params, v))),
                                             X, EPS))


def check_gru(rng, n_instances, tracker, backward=gru_backward):
    for _ in range(n_instances):
        H = 1 + rng.integers(4)
        params = GruParams.init(H, rng)
        _perturb([params.b_z, params.b_r, params.b_h], rng, 0.5)
        h = rng.normal((H,))
        m = rng.normal((H,))
        w = rng.normal((H,))
        _, cache = gru_cell(params, h, m, return_cache=True)
        grads, dh, dm = backward(params, cache, w)

        def loss():
            return float(w @ gru_cell(params, h, m))

        for (name, arr), (_, garr) in zip(params.named(), grads.named()):
            tracker.add(f"gru.{name}", garr, _param_fd(loss, arr))
        tracker.add("gru.h", dh, finite_diff(lambda v: float(w @ gru_cell(params, v, m)), h, EPS))
        tracker.add("gru.m", dm, finite_diff(lambda v: float(w @ gru_cell(params, h, v)), m, EPS))


def check_gnn(rng, n_instances, tracker, C=3, steps=2, forward_kernel=None, backward_kernel=None):
    for _ in range(n_instances):
        params = gnn_mod.GnnParams.init(C, rng, steps)
        _perturb([a for _, a in params.named()], rng, 0.3)
        x = 1.5 * rng.normal((C,))
        w = rng.normal((C,))
        _, cache = gnn_mod.gnn_forward(x, params, return_cache=True, kernel=forward_kernel)
        grads, dx = gnn_mod.gnn_backward(params, cache, w, kernel=backward_kernel)

        def loss():
            return float(w @ gnn_mod.gnn_forward(x, params, kernel=forward_kernel))

        for (name, arr), (_, garr) in zip(params.named(), grads.named()):
            tracker.add(f"gnn.{name}", garr, _param_fd(loss, arr))
        numeric = finite_diff(
            lambda v: float(w @ gnn_mod.gnn_forward(v, params, kernel=forward_kernel)), x, EPS)
        tracker.add("gnn.x", dx, numeric)


def run_all(n_instances=50, seed=0, gru_backward_fn=gru_backward):
    """Run every suite; returns a list of :class:`BlockResult`."""
    rng = Rng(seed)
    tracker = _Tracker()
    check_partial_bce(rng.spawn(1), n_instances, tracker)
    check_mlp(rng.spawn(2), n_instances, tracker)
    check_gru(rng.spawn(3), n_instances, tracker, backward=gru_backward_fn)
    check_gnn(rng.spawn(4), n_instances, tracker)
    return tracker.results()


def format_report(results):
    lines = []
    for r in results:
        status = "ok" if r.passed else "FAIL"
        lines.append(f"{status:4s} {r.name:20s} max_rel_err={r.max_rel_error:.3e} tol={r.tolerance:.0e}")
    return "\n".join(lines)
