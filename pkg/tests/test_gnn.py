import math
import os
import subprocess
import sys

import numpy as np
import pytest

from partiallab import _kernels
from partiallab.errors import DomainError, ShapeError, StateError
from partiallab.gnn import (GnnParams, gnn_backward, gnn_forward, gnn_forward_reference,
                            init_hidden, message_update)
from partiallab.nn import GRU_FIELDS, GruParams, finite_diff, gru_cell, rel_error
from partiallab.rng import Rng

KERNELS = [
    pytest.param(_kernels.gnn_forward_numba, _kernels.gnn_backward_numba, id="numba"),
    pytest.param(_kernels.gnn_forward_numpy, _kernels.gnn_backward_numpy, id="numpy"),
]


def random_params(rng, C, steps, scale=0.4):
    p = GnnParams.init(C, rng, steps)
    for _, a in p.named():
        a += scale * rng.normal(a.shape)
    return p


def scalar_message(H, W, b):
    C = len(H)
    f = [[max(0.0, sum(W[j][k] * H[u][k] for k in range(C)) + b[j]) for j in range(C)]
         for u in range(C)]
    return [[sum(f[u][j] for u in range(C) if u != v) / (C - 1) for j in range(C)]
            for v in range(C)]


def test_init_hidden_examples():
    assert np.array_equal(init_hidden([1.0, 2.0, 3.0]), np.diag([1.0, 2.0, 3.0]))
    assert np.array_equal(init_hidden(np.zeros(4)), np.zeros((4, 4)))
    assert np.array_equal(init_hidden([-5.0, 0.5]), [[-5.0, 0.0], [0.0, 0.5]])
    with pytest.raises(DomainError):
        init_hidden([1.0])


def test_message_identity_is_mean_of_other_rows(rng):
    p = GnnParams.zeros(4)
    p.W_M[:] = np.eye(4)
    H = np.abs(rng.normal((4, 4)))
    m = message_update(H, p)
    for v in range(4):
        assert np.allclose(m[v], np.delete(H, v, axis=0).mean(axis=0), rtol=0, atol=1e-15)


def test_message_two_nodes_swap(rng):
    p = random_params(rng, 2, 1)
    H = rng.normal((2, 2))
    m = message_update(H, p)
    f = np.maximum(H @ p.W_M.T + p.b_M, 0.0)
    assert np.array_equal(m[0], f[1])
    assert np.array_equal(m[1], f[0])


def test_message_matches_scalar_oracle():
    r = Rng(31)
    p = random_params(r, 3, 1)
    H = r.normal((3, 3))
    expected = scalar_message(H.tolist(), p.W_M.tolist(), p.b_M.tolist())
    assert np.allclose(message_update(H, p), expected, rtol=0, atol=1e-14)
    with pytest.raises(ShapeError):
        message_update(np.zeros((2, 2)), p)


@pytest.mark.parametrize("fwd,bwd", KERNELS)
def test_zero_steps_doubles_scores(fwd, bwd, rng):
    p = random_params(rng, 4, 0)
    x = rng.normal((4,))
    assert np.array_equal(gnn_forward(x, p, kernel=fwd), 2.0 * x)
    _, cache = gnn_forward(x, p, return_cache=True, kernel=fwd)
    w = rng.normal((4,))
    grads, dx = gnn_backward(p, cache, w, kernel=bwd)
    assert np.array_equal(dx, 2.0 * w)
    assert all(not a.any() for _, a in grads.named())


@pytest.mark.parametrize("fwd,bwd", KERNELS)
@pytest.mark.parametrize("steps", [1, 2, 3, 5])
def test_zero_params_closed_form(fwd, bwd, steps, rng):
    x = rng.normal((5,))
    out = gnn_forward(x, GnnParams.zeros(5, steps), kernel=fwd)
    assert np.allclose(out, x * (1 + 2.0 ** -steps), rtol=0, atol=1e-12)


def test_one_step_matches_scalar_composition():
    r = Rng(44)
    C = 3
    p = random_params(r, C, 1)
    x = r.normal((C,))
    H0 = [[x[v] if k == v else 0.0 for k in range(C)] for v in range(C)]
    M = scalar_message(H0, p.W_M.tolist(), p.b_M.tolist())
    L = {k: v.tolist() for k, v in p.gru.named()}
    sig = lambda a: 1.0 / (1.0 + math.exp(-a))  # noqa: E731
    scores = []
    for v in range(C):
        h, m = H0[v], M[v]
        z = [sig(sum(L["W_z"][j][k] * m[k] + L["U_z"][j][k] * h[k] for k in range(C)) + L["b_z"][j])
             for j in range(C)]
        r_ = [sig(sum(L["W_r"][j][k] * m[k] + L["U_r"][j][k] * h[k] for k in range(C)) + L["b_r"][j])
              for j in range(C)]
        ht = [math.tanh(sum(L["W_h"][j][k] * m[k] + L["U_h"][j][k] * r_[k] * h[k]
                            for k in range(C)) + L["b_h"][j]) for j in range(C)]
        h1 = [(1 - z[j]) * h[j] + z[j] * ht[j] for j in range(C)]
        scores.append(x[v] + h1[v])
    for fwd, _ in [(k.values[0], None) for k in KERNELS]:
        assert np.allclose(gnn_forward(x, p, kernel=fwd), scores, rtol=0, atol=1e-14)
    assert np.allclose(gnn_forward_reference(x, p), scores, rtol=0, atol=1e-14)


@pytest.mark.parametrize("fwd,bwd", KERNELS)
def test_kernels_match_reference(fwd, bwd, rng):
    for C, steps in [(2, 1), (3, 3), (6, 2)]:
        p = random_params(rng, C, steps)
        X = rng.normal((7, C))
        batch = gnn_forward(X, p, kernel=fwd)
        ref = np.stack([gnn_forward_reference(x, p) for x in X])
        assert np.allclose(batch, ref, rtol=0, atol=1e-13)


def test_numba_and_numpy_backward_agree(rng):
    p = random_params(rng, 5, 3)
    X = rng.normal((9, 5))
    W = rng.normal((9, 5))
    results = []
    for fwd, bwd in [(k.values[0], k.values[1]) for k in KERNELS]:
        _, cache = gnn_forward(X, p, return_cache=True, kernel=fwd)
        results.append(gnn_backward(p, cache, W, kernel=bwd))
    (ga, dxa), (gb, dxb) = results
    assert np.allclose(dxa, dxb, rtol=1e-12, atol=1e-14)
    for (_, a), (_, b) in zip(ga.named(), gb.named()):
        assert np.allclose(a, b, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("fwd,bwd", KERNELS)
def test_backward_matches_finite_differences(fwd, bwd, rng):
    for _ in range(5):
        p = random_params(rng, 3, 2)
        x = 1.5 * rng.normal((3,))
        w = rng.normal((3,))
        _, cache = gnn_forward(x, p, return_cache=True, kernel=fwd)
        grads, dx = gnn_backward(p, cache, w, kernel=bwd)
        for (name, arr), (_, g) in zip(p.named(), grads.named()):
            def f(v, arr=arr):
                saved = arr.copy()
                arr[...] = v
                out = float(w @ gnn_forward(x, p, kernel=fwd))
                arr[...] = saved
                return out
            assert rel_error(g, finite_diff(f, arr.copy())) <= 1e-5, name
        assert rel_error(dx, finite_diff(lambda v: float(w @ gnn_forward(v, p, kernel=fwd)), x)) <= 1e-5


def test_batched_gradient_is_sum_of_per_example(rng):
    p = random_params(rng, 4, 2)
    X = rng.normal((3, 4))
    W = rng.normal((3, 4))
    _, cache = gnn_forward(X, p, return_cache=True)
    total, dX = gnn_backward(p, cache, W)
    parts = []
    for i in range(3):
        _, c = gnn_forward(X[i], p, return_cache=True)
        parts.append(gnn_backward(p, c, W[i]))
    for k, (_, a) in enumerate(total.named()):
        assert np.allclose(a, sum(pp[0].named()[k][1] for pp in parts), rtol=1e-12, atol=1e-14)
    assert np.allclose(dX, np.stack([pp[1] for pp in parts]), rtol=1e-12, atol=1e-14)


def test_zero_upstream_gives_zero_gradients(rng):
    p = random_params(rng, 3, 2)
    _, cache = gnn_forward(rng.normal((3,)), p, return_cache=True)
    grads, dx = gnn_backward(p, cache, np.zeros(3))
    assert not dx.any()
    assert all(not a.any() for _, a in grads.named())


def test_backward_without_forward(rng):
    with pytest.raises(StateError):
        gnn_backward(random_params(rng, 3, 1), None, np.ones(3))


def permuted(p, perm):
    P = np.eye(len(perm))[perm]
    gru = GruParams(**{n: (a[perm] if a.ndim == 1 else P @ a @ P.T)
                       for n, a in p.gru.named()})
    return GnnParams(P @ p.W_M @ P.T, p.b_M[perm], gru, p.steps)


@pytest.mark.parametrize("fwd,bwd", KERNELS)
def test_permutation_equivariance(fwd, bwd, rng):
    for _ in range(20):
        p = random_params(rng, 4, 3)
        x = rng.normal((4,))
        perm = rng.permutation(4)
        out = gnn_forward(x, p, kernel=fwd)
        out_perm = gnn_forward(x[perm], permuted(p, perm), kernel=fwd)
        assert np.allclose(out_perm, out[perm], rtol=0, atol=1e-12)


def test_shared_parameters_accumulate_over_nodes_and_steps(rng):
    # with T steps the gradient of W_M is a sum over C*T applications; compare
    # the T=3 gradient against finite differences on the shared matrix
    p = random_params(rng, 4, 3)
    x = rng.normal((4,))
    w = rng.normal((4,))
    _, cache = gnn_forward(x, p, return_cache=True)
    grads, _ = gnn_backward(p, cache, w)

    def f(v):
        saved = p.gru.U_h.copy()
        p.gru.U_h[...] = v
        out = float(w @ gnn_forward(x, p))
        p.gru.U_h[...] = saved
        return out
    assert rel_error(grads.gru.U_h, finite_diff(f, p.gru.U_h.copy())) <= 1e-5


def test_readout_residual(rng):
    p = random_params(rng, 4, 2)
    x = rng.normal((4,))
    _, cache = gnn_forward(x, p, return_cache=True)
    hT = np.diag(cache.Hs[-1][0])
    out = gnn_forward(x, p)
    assert np.allclose(out - x, hT, rtol=0, atol=1e-15)


def test_shape_errors(rng):
    p = random_params(rng, 3, 1)
    with pytest.raises(ShapeError):
        gnn_forward(np.zeros(4), p)
    with pytest.raises(ShapeError):
        GnnParams(np.zeros((3, 3)), np.zeros(3), GruParams.zeros(2))


def test_env_flag_selects_numpy_backend():
    code = ("from partiallab import _kernels, _jit;"
            "print(_jit.backend_name(), _kernels.kernel_name(8), _kernels.kernel_name(40))")
    env = dict(os.environ, PARTIALLAB_DISABLE_JIT="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True).stdout.split()
    assert out == ["numpy", "numpy", "numpy"]
    env["PARTIALLAB_DISABLE_JIT"] = "0"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True).stdout.split()
    assert out == ["numba", "numba", "numpy"]


@pytest.mark.parametrize("C", [4, _kernels.NUMBA_MAX_CLASSES + 3])
def test_default_dispatch_matches_both_kernels(C, rng):
    p = random_params(rng, C, 2)
    X = rng.normal((3, C))
    out = gnn_forward(X, p)
    for fwd, _ in [(k.values[0], None) for k in KERNELS]:
        assert np.allclose(out, gnn_forward(X, p, kernel=fwd), rtol=0, atol=1e-13)
