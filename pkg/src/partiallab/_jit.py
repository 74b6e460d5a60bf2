"""numba shim.

Kernels decorated with :func:`njit` compile with numba when it is importable.
``USE_NUMBA`` decides which implementation the public dispatchers bind to;
set ``PARTIALLAB_DISABLE_JIT=1`` to force the pure-numpy path.
"""
import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _env_flag(name):
    return os.environ.get(name, "").strip().lower() not in ("", "0", "false", "no")


JIT_DISABLED = _env_flag("PARTIALLAB_DISABLE_JIT")
USE_NUMBA = HAVE_NUMBA and not JIT_DISABLED


def njit(*args, **kwargs):
    if HAVE_NUMBA:
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]
    return lambda fn: fn


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
