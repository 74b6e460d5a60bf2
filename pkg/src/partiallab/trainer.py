"""Mini-batch SGD under partial-BCE with optional curriculum relabeling."""
from dataclasses import dataclass, field

import numpy as np

from .curriculum import StrategyConfig, relabel_step
from .errors import DomainError, NumericError, StateError
from .gnn import GnnParams, gnn_backward, gnn_forward
from .loss import GNorm, partial_bce, solve_g_params
from .metrics import evaluate_scores
from .nn import GRU_FIELDS, GruParams, MlpParams, mlp_backward, mlp_forward
from .rng import Rng


class Model:
    """MLP backbone, optionally followed by the GNN head."""

    def __init__(self, mlp, gnn=None):
        self.mlp = mlp
        self.gnn = gnn
        self._cache = None

    @classmethod
    def init(cls, d, hidden, c, rng, use_gnn=False, gnn_steps=3):
        sizes = [d, hidden, c] if hidden else [d, c]
        mlp = MlpParams.init(sizes, rng)
        gnn = GnnParams.init(c, rng, gnn_steps) if use_gnn else None
        return cls(mlp, gnn)

    def params(self):
        out = [(f"mlp.{n}", a) for n, a in self.mlp.named()]
        if self.gnn is not None:
            out += [(f"gnn.{n}", a) for n, a in self.gnn.named()]
        return out

    def predict(self, X):
        scores = mlp_forward(self.mlp, X)
        if self.gnn is not None:
            scores = gnn_forward(scores, self.gnn)
        return scores

    def forward(self, X):
        scores, mlp_cache = mlp_forward(self.mlp, X, return_cache=True)
        gnn_cache = None
        if self.gnn is not None:
            scores, gnn_cache = gnn_forward(scores, self.gnn, return_cache=True)
        self._cache = (mlp_cache, gnn_cache)
        return scores

    def backward(self, dscores):
        """Gradients aligned with :meth:`params`. Consumes the cached forward."""
        if self._cache is None:
            raise StateError("backward called before forward")
        mlp_cache, gnn_cache = self._cache
        self._cache = None
        grads = []
        if self.gnn is not None:
            g_gnn, dscores = gnn_backward(self.gnn, gnn_cache, dscores)
            grads = [a for _, a in g_gnn.named()]
        g_mlp, _ = mlp_backward(self.mlp, mlp_cache, dscores)
        return [a for _, a in g_mlp.named()] + grads

    def to_dict(self):
        out = {"sizes": self.mlp.sizes, "gnn_steps": None if self.gnn is None else self.gnn.steps,
               "params": {n: a.tolist() for n, a in self.params()}}
        return out

    @classmethod
    def from_dict(cls, doc):
        p = {k: np.asarray(v, dtype=np.float64) for k, v in doc["params"].items()}
        n_layers = len(doc["sizes"]) - 1
        mlp = MlpParams([p[f"mlp.W{k}"] for k in range(n_layers)],
                        [p[f"mlp.b{k}"] for k in range(n_layers)])
        gnn = None
        if doc.get("gnn_steps") is not None:
            gru = GruParams(**{f: p[f"gnn.{f}"] for f in GRU_FIELDS})
            gnn = GnnParams(p["gnn.W_M"], p["gnn.b_M"], gru, int(doc["gnn_steps"]))
        return cls(mlp, gnn)


def sgd_step(params, grads, lr, weight_decay=0.0):
    """In-place ``theta <- theta - lr * (grad + 2 * weight_decay * theta)``."""
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient")
    for p, g in zip(params, grads):
        p -= lr * (g + 2.0 * weight_decay * p)
    return params


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 16
    lr: float = 0.1
    lr_decay_epoch: int = 10
    weight_decay: float = 1e-4
    seed: int = 0
    hidden: int = 32
    use_gnn: bool = False
    gnn_steps: int = 3
    gnorm: GNorm = field(default_factory=lambda: solve_g_params(1.0, 0.1, 5.0))
    relabel_epochs: tuple = ()
    strategy: StrategyConfig = None

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        self.relabel_epochs = tuple(sorted(set(int(e) for e in self.relabel_epochs)))
        if any(not 1 <= e <= self.epochs for e in self.relabel_epochs):
            raise ValueError("relabel epochs must lie in [1, epochs]")


@dataclass
class RunReport:
    epoch_losses: list
    epoch_clean_losses: list
    metrics: object
    budget: object
    audit: list
    models: list = field(default=None, repr=False)

    @property
    def model(self):
        return self.models[0]

    def to_dict(self):
        return {
            "epoch_losses": self.epoch_losses,
            "epoch_clean_losses": self.epoch_clean_losses,
            "metrics": None if self.metrics is None else self.metrics.to_dict(),
            "budget": self.budget.to_dict(),
            "audit": [row.to_dict() for row in self.audit],
        }


def _mean_loss(model, features, y, gnorm):
    losses, _ = partial_bce(model.predict(features), y, gnorm)
    return float(losses.mean())


def run_epoch(model, features, y, cfg, lr, rng):
    n = features.shape[0]
    order = rng.permutation(n)
    params = [a for _, a in model.params()]
    total, batches = 0.0, 0
    for start in range(0, n, cfg.batch_size):
        idx = order[start:start + cfg.batch_size]
        yb = y[idx]
        if not yb.any():
            continue
        scores = model.forward(features[idx])
        losses, grad = partial_bce(scores, yb, cfg.gnorm)
        total += losses.sum() / len(idx)
        batches += 1
        grads = model.backward(grad / len(idx))
        sgd_step(params, grads, lr, cfg.weight_decay)
    return total / max(batches, 1)


def train(cfg, dataset, eval_dataset=None):
    """Train on ``dataset.y_observed``; evaluate on ``eval_dataset.y_full`` if given."""
    if not np.any(dataset.y_observed):
        raise DomainError("the training set has no known label")
    strategy = cfg.strategy
    n_models = strategy.n_models if strategy is not None else 1
    root = Rng(cfg.seed)
    models = [Model.init(dataset.d, cfg.hidden, dataset.c, root.spawn(100 + k),
                         cfg.use_gnn, cfg.gnn_steps) for k in range(n_models)]
    batch_rngs = [root.spawn(200 + k) for k in range(n_models)]
    original = dataset.y_observed.copy()
    ds = dataset
    predicted = None
    audit, losses, clean_losses = [], [], []
    for epoch in range(1, cfg.epochs + 1):
        if strategy is not None and epoch in cfg.relabel_epochs:
            ds, _, predicted, row = relabel_step(models, ds, strategy, predicted, len(audit) + 1)
            audit.append(row)
        lr = cfg.lr if not cfg.lr_decay_epoch or epoch <= cfg.lr_decay_epoch else cfg.lr / 10.0
        epoch_loss = [run_epoch(m, ds.features, ds.y_observed, cfg, lr, r)
                      for m, r in zip(models, batch_rngs)]
        losses.append(float(epoch_loss[0]))
        clean_losses.append(_mean_loss(models[0], ds.features, original, cfg.gnorm))
    metrics = evaluate(models[0], eval_dataset) if eval_dataset is not None else None
    return RunReport(losses, clean_losses, metrics, dataset.budget(), audit, models)


def evaluate(model, dataset):
    if dataset.n == 0:
        raise DomainError("cannot evaluate on an empty split")
    return evaluate_scores(model.predict(dataset.features), dataset.y_full)
