"""Experiment configuration: JSON sections with defaults and strict validation.

Errors name the offending field with a JSON pointer such as
``/curriculum/theta``.
"""
import copy
import hashlib
import json
import numbers

from .curriculum import KINDS, StrategyConfig
from .data import PROTOCOLS
from .errors import ConfigError
from .loss import GNorm, solve_g_params
from .trainer import TrainConfig

DEFAULTS = {
    "data": {
        "n_train": 2000,
        "n_test": 500,
        "c": 8,
        "d": 16,
        "correlation_strength": 0.5,
        "feature_noise": 0.5,
        "bias_range": [-1.2, -0.3],
        "min_positives": 0,
        "seed": 0,
    },
    "mask": {"protocol": "partial", "proportion": 0.1, "seed": 1},
    "loss": {"gamma": 1.0, "p0": 0.1, "g0": 5.0, "alpha": None, "beta": None},
    "model": {"hidden": 32, "use_gnn": False, "gnn_steps": 3},
    "train": {
        "epochs": 20,
        "batch_size": 16,
        "lr": 0.1,
        "lr_decay_epoch": 10,
        "weight_decay": 1e-4,
        "seed": 0,
    },
    "curriculum": {"strategy": None, "theta": None, "ensemble_size": 2,
                   "relabel_epochs": [10, 15]},
}


def _fail(path, msg):
    raise ConfigError(f"{path}: {msg}")


def _is_int(v):
    return isinstance(v, numbers.Integral) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, numbers.Real) and not isinstance(v, bool)


def _int(cfg, sec, key, lo=None):
    v = cfg[sec][key]
    path = f"/{sec}/{key}"
    if not _is_int(v):
        _fail(path, "must be an integer")
    if lo is not None and v < lo:
        _fail(path, f"must be >= {lo}")


def _num(cfg, sec, key, lo=None, hi=None, lo_open=False, nullable=False):
    v = cfg[sec][key]
    path = f"/{sec}/{key}"
    if v is None and nullable:
        return
    if not _is_num(v):
        _fail(path, "must be a number")
    if lo is not None and (v <= lo if lo_open else v < lo):
        _fail(path, f"must be {'>' if lo_open else '>='} {lo}")
    if hi is not None and v > hi:
        _fail(path, f"must be <= {hi}")


def resolve(doc):
    """Merge ``doc`` over the defaults and validate. Returns a new dict."""
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        _fail("", "config must be a JSON object")
    cfg = copy.deepcopy(DEFAULTS)
    for sec, body in doc.items():
        if sec not in cfg:
            _fail(f"/{sec}", "unknown section")
        if not isinstance(body, dict):
            _fail(f"/{sec}", "must be an object")
        for key, val in body.items():
            if key not in cfg[sec]:
                _fail(f"/{sec}/{key}", "unknown key")
            cfg[sec][key] = val

    for key in ("n_train", "c", "d"):
        _int(cfg, "data", key, 1)
    _int(cfg, "data", "n_test", 0)
    _int(cfg, "data", "min_positives", 0)
    _int(cfg, "data", "seed", 0)
    _num(cfg, "data", "correlation_strength", 0.0, 1.0)
    _num(cfg, "data", "feature_noise", 0.0)
    br = cfg["data"]["bias_range"]
    if not (isinstance(br, list) and len(br) == 2 and all(_is_num(v) for v in br) and br[0] <= br[1]):
        _fail("/data/bias_range", "must be [low, high] with low <= high")

    if cfg["mask"]["protocol"] not in PROTOCOLS:
        _fail("/mask/protocol", f"must be one of {list(PROTOCOLS)}")
    _num(cfg, "mask", "proportion", 0.0, 1.0, lo_open=True)
    _int(cfg, "mask", "seed", 0)

    _num(cfg, "loss", "gamma")
    _num(cfg, "loss", "p0", 0.0, 1.0, lo_open=True)
    _num(cfg, "loss", "g0")
    _num(cfg, "loss", "alpha", nullable=True)
    _num(cfg, "loss", "beta", nullable=True)
    if (cfg["loss"]["alpha"] is None) != (cfg["loss"]["beta"] is None):
        _fail("/loss/alpha", "alpha and beta must be given together")

    _int(cfg, "model", "hidden", 0)
    if not isinstance(cfg["model"]["use_gnn"], bool):
        _fail("/model/use_gnn", "must be true or false")
    _int(cfg, "model", "gnn_steps", 0)
    if cfg["model"]["use_gnn"] and cfg["data"]["c"] < 2:
        _fail("/model/use_gnn", "the GNN head needs c >= 2")

    for key in ("epochs", "batch_size"):
        _int(cfg, "train", key, 1)
    _int(cfg, "train", "lr_decay_epoch", 0)
    _int(cfg, "train", "seed", 0)
    _num(cfg, "train", "lr", 0.0)
    _num(cfg, "train", "weight_decay", 0.0)

    cur = cfg["curriculum"]
    if cur["strategy"] is not None and cur["strategy"] not in KINDS:
        _fail("/curriculum/strategy", f"must be null or one of {list(KINDS)}")
    _num(cfg, "curriculum", "theta", nullable=True)
    _int(cfg, "curriculum", "ensemble_size", 1)
    re = cur["relabel_epochs"]
    if not isinstance(re, list) or not all(_is_int(e) for e in re):
        _fail("/curriculum/relabel_epochs", "must be a list of integers")
    # relabel epochs only matter once a strategy is chosen
    if cur["strategy"] is not None and any(not 1 <= e <= cfg["train"]["epochs"] for e in re):
        _fail("/curriculum/relabel_epochs", "entries must lie in [1, train.epochs]")
    if cur["strategy"] is not None:
        try:
            StrategyConfig(cur["strategy"], cur["theta"], cur["ensemble_size"])
        except ConfigError as exc:
            field = "ensemble_size" if "ensemble_size" in str(exc) else "theta"
            _fail(f"/curriculum/{field}", str(exc))
    gnorm_from(cfg)
    return cfg


def canonical_json(cfg):
    return json.dumps(cfg, sort_keys=True, indent=2) + "\n"


def config_hash(cfg):
    return hashlib.sha256(canonical_json(cfg).encode("utf-8")).hexdigest()


def gnorm_from(cfg):
    loss = cfg["loss"]
    if loss["alpha"] is not None:
        return GNorm(float(loss["alpha"]), float(loss["beta"]), float(loss["gamma"]))
    try:
        return solve_g_params(float(loss["gamma"]), float(loss["p0"]), float(loss["g0"]))
    except ValueError as exc:
        _fail("/loss/p0", str(exc))


def train_config_from(cfg):
    cur = cfg["curriculum"]
    strategy = None
    if cur["strategy"] is not None:
        strategy = StrategyConfig(cur["strategy"], cur["theta"], cur["ensemble_size"])
    t = cfg["train"]
    return TrainConfig(
        epochs=t["epochs"],
        batch_size=t["batch_size"],
        lr=float(t["lr"]),
        lr_decay_epoch=t["lr_decay_epoch"],
        weight_decay=float(t["weight_decay"]),
        seed=t["seed"],
        hidden=cfg["model"]["hidden"],
        use_gnn=cfg["model"]["use_gnn"],
        gnn_steps=cfg["model"]["gnn_steps"],
        gnorm=gnorm_from(cfg),
        relabel_epochs=tuple(cur["relabel_epochs"]) if strategy is not None else (),
        strategy=strategy,
    )
