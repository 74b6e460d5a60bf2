"""Config-driven runs and the annotation-budget sweep."""
import os
from concurrent.futures import ProcessPoolExecutor

from . import config as config_mod
from .data import apply_protocol, gen_synthetic, half_up
from .rng import Rng
from .trainer import train

COMPARE_HEADER = ("protocol", "proportion", "seed", "map", "exact_match", "macro_f1",
                  "micro_f1", "pc_p", "pc_r", "ov_p", "ov_r", "clean_count", "noisy_count")


def build_datasets(cfg):
    """Generate the synthetic data, split it and apply the masking protocol to the train part."""
    d = cfg["data"]
    n_train, n_test = d["n_train"], d["n_test"]
    full = gen_synthetic(n_train + n_test, d["c"], d["d"], d["correlation_strength"], d["seed"],
                         feature_noise=d["feature_noise"], bias_range=tuple(d["bias_range"]),
                         min_positives=d["min_positives"])
    train_ds = full.subset(slice(0, n_train))
    test_ds = full.subset(slice(n_train, n_train + n_test))
    m = cfg["mask"]
    train_ds = apply_protocol(train_ds, m["protocol"], m["proportion"], m["seed"])
    return train_ds, test_ds


def run(cfg):
    cfg = config_mod.resolve(cfg)
    train_ds, test_ds = build_datasets(cfg)
    return train(config_mod.train_config_from(cfg), train_ds, test_ds if test_ds.n else None)


def derive_seed(seed, tag):
    return Rng(seed).spawn(tag).state % (2 ** 31)


def sweep_point_config(base, protocol, proportion, seed):
    """Config for one sweep cell. Dense budgets are matched to the partial budget."""
    cfg = config_mod.resolve(base)
    c = cfg["data"]["c"]
    if protocol == "dense":
        proportion = half_up(proportion * c) / c
    cfg["mask"].update(protocol=protocol, proportion=proportion, seed=derive_seed(seed, 2))
    cfg["data"]["seed"] = derive_seed(seed, 1)
    cfg["train"]["seed"] = derive_seed(seed, 3)
    return cfg


def _run_point(args):
    base, protocol, proportion, seed = args
    report = run(sweep_point_config(base, protocol, proportion, seed))
    m = report.metrics
    b = report.budget
    return (protocol, proportion, seed, m.map, m.exact_match, m.macro_f1, m.micro_f1,
            m.pc_precision, m.pc_recall, m.ov_precision, m.ov_recall,
            b.clean_count, b.noisy_count)


def max_workers():
    cap = os.environ.get("PARTIALLAB_THREADS")
    n = os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return n


def compare(base, protocols, proportions, seeds, workers=None):
    """One result row per (protocol, proportion, seed), sorted in that order."""
    jobs = [(base, p, float(q), int(s)) for p in protocols for q in proportions for s in seeds]
    workers = max_workers() if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        rows = [_run_point(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_point, jobs))
    return sorted(rows, key=lambda r: (r[0], r[1], r[2]))
