"""Synthetic correlated multi-label data and annotation-budget protocols.

Labels use {-1, 0, +1} for absent / unknown / present. Every protocol keeps
the full ground truth next to the observed labels so that budgets and
pseudo-label quality can be audited afterwards.
"""
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, GenerationError, ShapeError
from .rng import Rng

PROTOCOLS = ("full", "partial", "dense", "noisy", "noisy_plus")


@dataclass(frozen=True)
class BudgetReport:
    clean_count: int
    noisy_count: int
    total_slots: int

    def to_dict(self):
        return {"clean_count": self.clean_count, "noisy_count": self.noisy_count,
                "total_slots": self.total_slots}


@dataclass
class Dataset:
    features: np.ndarray
    y_full: np.ndarray
    y_observed: np.ndarray
    protocol: str = "full"
    seed: int = 0

    def __post_init__(self):
        n = self.features.shape[0]
        if self.y_full.shape != self.y_observed.shape or self.y_full.shape[0] != n:
            raise ShapeError("features and label matrices disagree on shape")
        if np.any(self.y_full == 0):
            raise DomainError("y_full must not contain unknown labels")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def c(self):
        return self.y_full.shape[1]

    @property
    def d(self):
        return self.features.shape[1]

    def budget(self):
        known = self.y_observed != 0
        clean = int(np.count_nonzero(known & (self.y_observed == self.y_full)))
        noisy = int(np.count_nonzero(known)) - clean
        return BudgetReport(clean, noisy, self.y_full.size)

    def subset(self, rows):
        return replace(self, features=self.features[rows], y_full=self.y_full[rows],
                       y_observed=self.y_observed[rows])

    def with_observed(self, y_observed, protocol=None, seed=None):
        return replace(self, y_observed=np.asarray(y_observed, dtype=np.int8),
                       protocol=self.protocol if protocol is None else protocol,
                       seed=self.seed if seed is None else seed)


def half_up(v):
    return int(math.floor(v + 0.5))


def gen_synthetic(n, c, d, correlation_strength=0.5, seed=0, feature_noise=0.5,
                  bias_range=(-1.2, -0.3), min_positives=0, max_resample=100):
    """Fully labeled data from a shared-plus-private latent factor model.

    The latent vector has ``c + 1`` standard-normal coordinates: one shared
    by every class and one private per class. Class ``k`` is present when
    ``sqrt(rho) * z_shared + sqrt(1 - rho) * z_k + b_k > 0``. Features are a
    random linear image of the latent vector plus isotropic noise.
    """
    if min(n, c, d) < 1:
        raise DomainError("n, c and d must all be >= 1")
    if not 0.0 <= correlation_strength <= 1.0:
        raise DomainError("correlation_strength must lie in [0, 1]")
    if min_positives > c:
        raise DomainError("min_positives cannot exceed the number of classes")
    rng = Rng(seed)
    k = c + 1
    mixing = rng.normal((d, k)) / math.sqrt(k)
    w = np.zeros((c, k))
    w[:, 0] = math.sqrt(correlation_strength)
    w[np.arange(c), np.arange(1, c + 1)] = math.sqrt(1.0 - correlation_strength)

    z = rng.normal((n, k))
    lo, hi = bias_range
    bias = lo + (hi - lo) * rng.uniform((c,))
    for _ in range(max_resample):
        y = np.where(z @ w.T + bias > 0, 1, -1)
        bad_cls = np.flatnonzero(np.all(y == 1, axis=0) | np.all(y == -1, axis=0))
        bad_rows = np.flatnonzero((y == 1).sum(axis=1) < min_positives)
        if bad_cls.size == 0 and bad_rows.size == 0:
            break
        bias[bad_cls] = lo + (hi - lo) * rng.uniform((bad_cls.size,))
        if bad_rows.size:
            z[bad_rows] = rng.normal((bad_rows.size, k))
    else:
        raise GenerationError(f"could not reach feasible labels after {max_resample} resamples")

    features = z @ mixing.T + feature_noise * rng.normal((n, d))
    y = y.astype(np.int8)
    return Dataset(features, y, y.copy(), "full", int(seed))


def _require_full(ds):
    if np.any(ds.y_observed != ds.y_full):
        raise DomainError("protocol expects a fully labeled dataset")


def mask_partial(ds, p, seed):
    """Keep exactly ``round(p * C)`` uniformly chosen labels per example."""
    _require_full(ds)
    if not 0.0 < p <= 1.0:
        raise DomainError("p must be in (0, 1]")
    keep = half_up(p * ds.c)
    if keep == 0:
        raise DomainError(f"p={p} keeps no label out of {ds.c}")
    rng = Rng(seed)
    order = np.argsort(rng.uniform((ds.n, ds.c)), axis=1, kind="stable")
    mask = np.zeros((ds.n, ds.c), dtype=bool)
    np.put_along_axis(mask, order[:, :keep], True, axis=1)
    return ds.with_observed(np.where(mask, ds.y_full, 0), "partial", seed)


def mask_dense(ds, fraction, seed):
    """Fully label ``round(fraction * N)`` examples; the rest become all-unknown rows."""
    _require_full(ds)
    if not 0.0 < fraction <= 1.0:
        raise DomainError("fraction must be in (0, 1]")
    keep = half_up(fraction * ds.n)
    if keep == 0:
        raise DomainError("dense protocol would label no example")
    rows = Rng(seed).permutation(ds.n)[:keep]
    y = np.zeros_like(ds.y_full)
    y[rows] = ds.y_full[rows]
    return ds.with_observed(y, "dense", seed)


def corrupt_noisy(ds, clean_fraction, seed):
    """Flip the sign of exactly ``round((1 - clean_fraction) * N * C)`` slots."""
    _require_full(ds)
    if not 0.0 <= clean_fraction <= 1.0:
        raise DomainError("clean_fraction must be in [0, 1]")
    n_flip = half_up((1.0 - clean_fraction) * ds.y_full.size)
    slots = Rng(seed).permutation(ds.y_full.size)[:n_flip]
    y = ds.y_full.copy().reshape(-1)
    y[slots] = -y[slots]
    return ds.with_observed(y.reshape(ds.y_full.shape), "noisy", seed)


def make_noisy_plus(ds, seed):
    """Keep one uniformly chosen positive per example and turn the others negative."""
    _require_full(ds)
    pos = ds.y_full == 1
    counts = pos.sum(axis=1)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise DomainError(f"{empty.size} examples have no positive label (first: row {empty[0]})")
    u = Rng(seed).uniform((ds.n,))
    chosen = np.minimum(np.floor(u * counts).astype(np.int64), counts - 1)
    # column of the chosen-th positive in each row
    rank = np.cumsum(pos, axis=1) - 1
    keep = pos & (rank == chosen[:, None])
    y = np.where(pos & ~keep, -1, ds.y_full).astype(np.int8)
    return ds.with_observed(y, "noisy_plus", seed)


def apply_protocol(ds, protocol, proportion, seed):
    """Dispatch by name. ``proportion`` is the label budget for the protocol."""
    if protocol == "full":
        return ds.with_observed(ds.y_full.copy(), "full", seed)
    if protocol == "partial":
        return mask_partial(ds, proportion, seed)
    if protocol == "dense":
        return mask_dense(ds, proportion, seed)
    if protocol == "noisy":
        return corrupt_noisy(ds, proportion, seed)
    if protocol == "noisy_plus":
        return make_noisy_plus(ds, seed)
    raise DomainError(f"unknown protocol {protocol!r}; expected one of {PROTOCOLS}")


# ---------------------------------------------------------------------------
# text serialization


def save_dataset(ds, path):
    """Header ``N C d protocol seed`` then one line per example:
    d features, C observed labels, C full labels."""
    lines = [f"{ds.n} {ds.c} {ds.d} {ds.protocol} {ds.seed}"]
    for i in range(ds.n):
        parts = [repr(float(v)) for v in ds.features[i]]
        parts += [str(int(v)) for v in ds.y_observed[i]]
        parts += [str(int(v)) for v in ds.y_full[i]]
        lines.append(" ".join(parts))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_dataset(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 5:
            raise ValueError(f"{path}: malformed header")
        n, c, d = (int(v) for v in header[:3])
        protocol, seed = header[3], int(header[4])
        rows = [line.split() for line in fh if line.strip()]
    if len(rows) != n or any(len(r) != d + 2 * c for r in rows):
        raise ValueError(f"{path}: expected {n} rows of {d + 2 * c} fields")
    features = np.array([[float(v) for v in r[:d]] for r in rows], dtype=np.float64).reshape(n, d)
    y_obs = np.array([[int(v) for v in r[d:d + c]] for r in rows], dtype=np.int8).reshape(n, c)
    y_full = np.array([[int(v) for v in r[d + c:]] for r in rows], dtype=np.int8).reshape(n, c)
    return Dataset(features, y_full, y_obs, protocol, seed)
