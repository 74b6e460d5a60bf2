"""Time the GNN head forward/backward kernels: numba vs pure numpy.

    python benchmarks/bench_gnn.py [--batch 16] [--classes 8 20 80] [--steps 3] [--repeat 20]

Both kernels are called directly, so the comparison does not depend on
PARTIALLAB_DISABLE_JIT. Results are checked for agreement before timing. The
last column shows which kernel the default dispatcher uses at that size.
"""
import argparse
import time

import numpy as np

from partiallab import _kernels
from partiallab.gnn import GnnParams, gnn_backward, gnn_forward
from partiallab.rng import Rng


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench(batch, classes, steps, repeat):
    rng = Rng(classes)
    params = GnnParams.init(classes, rng, steps)
    X = rng.normal((batch, classes))
    W = rng.normal((batch, classes))
    out = {}
    for name, fwd, bwd in (("numba", _kernels.gnn_forward_numba, _kernels.gnn_backward_numba),
                           ("numpy", _kernels.gnn_forward_numpy, _kernels.gnn_backward_numpy)):
        scores, cache = gnn_forward(X, params, return_cache=True, kernel=fwd)
        _, dx = gnn_backward(params, cache, W, kernel=bwd)  # also triggers compilation
        out[name] = {
            "scores": scores,
            "dx": dx,
            "forward": best_of(lambda: gnn_forward(X, params, return_cache=True, kernel=fwd), repeat),
            "backward": best_of(lambda: gnn_backward(params, cache, W, kernel=bwd), repeat),
        }
    a, b = out["numba"], out["numpy"]
    agree = np.allclose(a["scores"], b["scores"], rtol=1e-12, atol=1e-12) and np.allclose(
        a["dx"], b["dx"], rtol=1e-10, atol=1e-12)
    return out, agree


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=16)
    ap.add_argument("--classes", type=int, nargs="+", default=[8, 20, 80])
    ap.add_argument("--steps", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    print(f"batch={args.batch} steps={args.steps} (best of {args.repeat}, milliseconds)")
    print(f"{'C':>4} {'pass':>8} {'numba':>10} {'numpy':>10} {'speedup':>8}  agree  dispatch")
    for c in args.classes:
        res, agree = bench(args.batch, c, args.steps, args.repeat)
        for phase in ("forward", "backward"):
            tn, tp = res["numba"][phase] * 1e3, res["numpy"][phase] * 1e3
            print(f"{c:>4} {phase:>8} {tn:>10.3f} {tp:>10.3f} {tp / tn:>7.1f}x  {agree!s:5}  "
                  f"{_kernels.kernel_name(c)}")


if __name__ == "__main__":
    main()
