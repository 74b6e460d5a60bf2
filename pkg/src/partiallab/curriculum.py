"""Selection of "easy" missing labels and the relabeling step.

Every ``select_*`` function looks only at slots flagged in ``missing`` and
returns ``(v_new, y_new)``: a boolean mask of newly selected slots and an
int8 matrix holding the predicted label (+1/-1) at those slots, 0 elsewhere.
"""
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError
from .nn import log_sigmoid, sigmoid

KINDS = ("threshold", "proportion", "positive_only", "ensemble", "uncertainty", "two_step")
ENSEMBLE_KINDS = ("ensemble", "uncertainty")
DEFAULT_THETA = {"threshold": 2.0, "proportion": 0.3, "positive_only": 5.0,
                 "ensemble": 2.0, "uncertainty": 0.3, "two_step": None}
AUDIT_COLUMNS = ("round", "strategy", "theta", "n_selected", "label_prop_after",
                 "tp_rate", "tn_rate")


@dataclass(frozen=True)
class StrategyConfig:
    kind: str
    theta: float = None
    ensemble_size: int = 2

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown strategy {self.kind!r}; expected one of {KINDS}")
        if self.theta is None and DEFAULT_THETA[self.kind] is not None:
            object.__setattr__(self, "theta", DEFAULT_THETA[self.kind])
        if self.kind == "proportion":
            if not 0.0 < self.theta <= 1.0:
                raise ConfigError("theta must be in (0, 1] for the proportion strategy")
        elif self.kind != "two_step" and not self.theta > 0.0:
            raise ConfigError(f"theta must be > 0 for the {self.kind} strategy")
        if self.kind in ENSEMBLE_KINDS and self.ensemble_size < 2:
            raise ConfigError("ensemble strategies need ensemble_size >= 2")

    @property
    def n_models(self):
        return self.ensemble_size if self.kind in ENSEMBLE_KINDS else 1


def _sign(x):
    return np.where(x >= 0, 1, -1).astype(np.int8)


def _finish(v, labels):
    return v, np.where(v, labels, 0).astype(np.int8)


def select_threshold(scores, missing, theta):
    """Select when ``x >= theta`` or ``x < -theta``; the label is the sign."""
    x = np.asarray(scores, dtype=np.float64)
    v = np.asarray(missing, dtype=bool) & ((x >= theta) | (x < -theta))
    return _finish(v, _sign(x))


def select_proportion(scores, missing, theta):
    """Select the ``ceil(theta * #missing)`` missing slots with the largest ``|x|``."""
    x = np.asarray(scores, dtype=np.float64)
    missing = np.asarray(missing, dtype=bool)
    flat = np.flatnonzero(missing)
    v = np.zeros(x.shape, dtype=bool)
    if flat.size:
        k = math.ceil(theta * flat.size)
        # flat indices are row-major, so a stable sort breaks ties by (row, class)
        order = np.argsort(-np.abs(x.reshape(-1)[flat]), kind="stable")
        v.reshape(-1)[flat[order[:k]]] = True
    return _finish(v, _sign(x))


def select_positive_only(scores, missing, theta):
    x = np.asarray(scores, dtype=np.float64)
    v = np.asarray(missing, dtype=bool) & (x >= theta)
    return _finish(v, np.ones(x.shape, dtype=np.int8))


def _check_stack(stack):
    stack = np.asarray(stack, dtype=np.float64)
    if stack.ndim != 3 or stack.shape[0] < 2:
        raise ConfigError("ensemble strategies need a stack of at least 2 models")
    return stack


def select_ensemble(score_stack, missing, theta):
    """Threshold rule applied to the mean score of K >= 2 models."""
    stack = _check_stack(score_stack)
    return select_threshold(stack.mean(axis=0), missing, theta)


def select_uncertainty(prob_stack, mean_scores, missing, theta):
    """Select when the population std of the K sigmoid outputs is ``<= theta``."""
    probs = _check_stack(prob_stack)
    spread = probs.std(axis=0)
    v = np.asarray(missing, dtype=bool) & (spread <= theta)
    return _finish(v, _sign(np.asarray(mean_scores, dtype=np.float64)))


def select_all(scores, missing):
    missing = np.asarray(missing, dtype=bool)
    return _finish(missing.copy(), _sign(np.asarray(scores, dtype=np.float64)))


def g_cost(v, theta):
    """Curriculum cost of the threshold strategy: ``-sum(v) * log sigmoid(theta)``."""
    return float(-np.count_nonzero(v) * log_sigmoid(theta))


def select(strategy, score_stack, missing):
    """Dispatch on ``strategy.kind`` for a ``(K, N, C)`` stack of pre-sigmoid scores."""
    stack = np.asarray(score_stack, dtype=np.float64)
    if stack.shape[0] != strategy.n_models:
        raise ConfigError(f"strategy {strategy.kind} expects {strategy.n_models} model(s), "
                          f"got {stack.shape[0]}")
    kind, theta = strategy.kind, strategy.theta
    if kind == "threshold":
        return select_threshold(stack[0], missing, theta)
    if kind == "proportion":
        return select_proportion(stack[0], missing, theta)
    if kind == "positive_only":
        return select_positive_only(stack[0], missing, theta)
    if kind == "ensemble":
        return select_ensemble(stack, missing, theta)
    if kind == "uncertainty":
        return select_uncertainty(sigmoid(stack), stack.mean(axis=0), missing, theta)
    return select_all(stack[0], missing)


@dataclass
class AuditRow:
    round: int
    strategy: str
    theta: float
    n_selected: int
    label_prop_after: float
    tp_rate: float
    tn_rate: float

    def to_dict(self):
        return asdict(self)


def _rate(hit, total):
    return float(hit / total) if total else None


def relabel_step(models, dataset, strategy, predicted=None, round_index=1):
    """Predict easy missing labels and write them into ``y_observed``.

    ``predicted`` marks slots filled by earlier rounds (used for the
    cumulative TP/TN rates). Returns ``(dataset, selection_mask, predicted, audit)``
    where ``selection_mask`` flags every slot the loss now uses.
    """
    y_obs = dataset.y_observed
    missing = y_obs == 0
    if predicted is None:
        predicted = np.zeros(y_obs.shape, dtype=bool)
    stack = np.stack([m.predict(dataset.features) for m in models])
    v_new, y_new = select(strategy, stack, missing)
    y_next = np.where(v_new, y_new, y_obs).astype(np.int8)
    predicted = predicted | v_new
    new_ds = dataset.with_observed(y_next)

    truth = dataset.y_full[predicted]
    guess = y_next[predicted]
    pos = guess == 1
    neg = guess == -1
    audit = AuditRow(
        round=round_index,
        strategy=strategy.kind,
        theta=strategy.theta,
        n_selected=int(np.count_nonzero(v_new)),
        label_prop_after=float(np.count_nonzero(y_next) / y_next.size),
        tp_rate=_rate(np.count_nonzero(truth[pos] == 1), np.count_nonzero(pos)),
        tn_rate=_rate(np.count_nonzero(truth[neg] == -1), np.count_nonzero(neg)),
    )
    return new_ds, y_next != 0, predicted, audit
