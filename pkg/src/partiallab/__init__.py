"""Multi-label learning from partial labels: partial-BCE, a GNN label head,
curriculum relabeling, multi-label metrics and annotation-budget simulation."""

__version__ = "0.1.0"

from .loss import GNorm, g_eval, label_proportion, partial_bce, solve_g_params  # noqa: E402
from .metrics import MetricsReport, evaluate_scores  # noqa: E402

__all__ = ["GNorm", "g_eval", "label_proportion", "partial_bce", "solve_g_params",
           "MetricsReport", "evaluate_scores", "__version__"]
