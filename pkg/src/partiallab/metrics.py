"""Multi-label evaluation metrics.

Ground truth and predictions use the {-1, +1} encoding; counting is done on
the positive class. Any 0/0 precision or recall term counts as 0.
"""
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainError, ShapeError

METRIC_NAMES = ("map", "exact_match", "macro_f1", "micro_f1",
                "pc_precision", "pc_recall", "ov_precision", "ov_recall")


@dataclass(frozen=True)
class MetricsReport:
    map: float
    exact_match: float
    macro_f1: float
    micro_f1: float
    pc_precision: float
    pc_recall: float
    ov_precision: float
    ov_recall: float

    def to_dict(self):
        return asdict(self)


def _pair(y, y_hat):
    y = np.asarray(y)
    y_hat = np.asarray(y_hat)
    if y.shape != y_hat.shape or y.ndim != 2:
        raise ShapeError(f"label shapes differ: {y.shape} vs {y_hat.shape}")
    return y, y_hat


def _div(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den != 0)
    return out


def binarize(scores):
    return np.where(np.asarray(scores) >= 0, 1, -1).astype(np.int8)


def exact_match(y, y_hat):
    y, y_hat = _pair(y, y_hat)
    if np.any(y == 0):
        raise DomainError("evaluation labels must be fully known")
    return float(np.mean(np.all(y == y_hat, axis=1)))


def _counts(y, y_hat):
    gt = y == 1
    pred = y_hat == 1
    correct = (gt & pred).sum(axis=0)
    return correct, pred.sum(axis=0), gt.sum(axis=0)


def f1_scores(y, y_hat):
    y, y_hat = _pair(y, y_hat)
    correct, n_pred, n_gt = _counts(y, y_hat)
    per_class = _div(2 * correct, n_pred + n_gt)
    micro = float(_div(2 * correct.sum(), n_pred.sum() + n_gt.sum()))
    return float(per_class.mean()), micro


def pc_ov_precision_recall(y, y_hat):
    y, y_hat = _pair(y, y_hat)
    correct, n_pred, n_gt = _counts(y, y_hat)
    pc_p = float(_div(correct, n_pred).mean())
    pc_r = float(_div(correct, n_gt).mean())
    ov_p = float(_div(correct.sum(), n_pred.sum()))
    ov_r = float(_div(correct.sum(), n_gt.sum()))
    return pc_p, pc_r, ov_p, ov_r


def average_precision(scores, positive):
    """Mean precision at the rank of each positive; ties go to the lower index."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    order = np.lexsort((np.arange(len(scores)), -scores))
    hits = positive[order]
    if not hits.any():
        raise DomainError("average precision needs at least one positive")
    ranks = np.flatnonzero(hits) + 1
    return float(np.mean(np.arange(1, len(ranks) + 1) / ranks))


def mean_average_precision(scores, y):
    scores = np.asarray(scores, dtype=np.float64)
    y, _ = _pair(y, scores)
    aps = []
    skipped = []
    for c in range(y.shape[1]):
        pos = y[:, c] == 1
        if not pos.any():
            skipped.append(c)
            continue
        aps.append(average_precision(scores[:, c], pos))
    if skipped:
        warnings.warn(f"classes without positives dropped from MAP: {skipped}", RuntimeWarning)
    if not aps:
        raise DomainError("no class has a positive example")
    return float(np.mean(aps))


def evaluate_scores(scores, y):
    """All eight metrics for pre-sigmoid ``scores`` against fully known ``y``."""
    y_hat = binarize(scores)
    macro, micro = f1_scores(y, y_hat)
    pc_p, pc_r, ov_p, ov_r = pc_ov_precision_recall(y, y_hat)
    return MetricsReport(
        map=mean_average_precision(scores, y),
        exact_match=exact_match(y, y_hat),
        macro_f1=macro,
        micro_f1=micro,
        pc_precision=pc_p,
        pc_recall=pc_r,
        ov_precision=ov_p,
        ov_recall=ov_r,
    )
