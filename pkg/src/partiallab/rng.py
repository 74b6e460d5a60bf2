"""Seeded splitmix64 generator.

The k-th 64-bit output of a stream seeded with ``s`` is
``mix(s + k * GOLDEN)`` (k starting at 1), so draws are computed in
vectorized blocks while staying bit-identical to the sequential algorithm.
"""
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def splitmix64(state, n):
    """Return ``(outputs, new_state)`` for ``n`` steps starting at ``state``."""
    with np.errstate(over="ignore"):
        k = np.arange(1, n + 1, dtype=np.uint64)
        z = np.uint64(state) + k * GOLDEN
        out = _mix(z)
    new_state = (int(state) + n * int(GOLDEN)) & _MASK
    return out, new_state


class Rng:
    """Deterministic generator. Same seed gives the same stream on every platform."""

    def __init__(self, seed):
        self.state = int(seed) & _MASK

    def next_u64(self, n):
        out, self.state = splitmix64(self.state, int(n))
        return out

    def spawn(self, key):
        """Independent child stream keyed by an integer, without advancing self."""
        with np.errstate(over="ignore"):
            mixed = _mix(np.array([self.state ^ ((int(key) * 0xD1B54A32D192ED03) & _MASK)],
                                  dtype=np.uint64))
        return Rng(int(mixed[0]))

    def uniform(self, size=None):
        shape = () if size is None else size
        n = int(np.prod(shape))
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
        return u.reshape(shape) if size is not None else float(u[0])

    def normal(self, size=None):
        shape = () if size is None else size
        n = int(np.prod(shape))
        m = (n + 1) // 2
        u = self.uniform((2 * m,))
        r = np.sqrt(-2.0 * np.log1p(-u[:m]))
        angle = 2.0 * np.pi * u[m:]
        z = np.concatenate([r * np.cos(angle), r * np.sin(angle)])[:n]
        return z.reshape(shape) if size is not None else float(z[0])

    def integers(self, high, size=None):
        """Uniform integers in [0, high)."""
        u = self.uniform(size if size is not None else (1,))
        out = np.minimum(np.floor(u * high).astype(np.int64), high - 1)
        return out if size is not None else int(out[0])

    def permutation(self, n):
        return np.argsort(self.uniform((n,)), kind="stable")
