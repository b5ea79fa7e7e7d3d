"""Evaluation metrics, the discrete Gibbs oracle, result IO and the CLI."""

from .gibbs import GibbsResult, chain_marginal, enumerated_marginal, gibbs_toy, total_variation
from .gradcheck import env_gradcheck
from .metrics import MetricsReport, NonPositiveMax, evaluate, nearest_rank, normalize_costs, test_set

__all__ = [
    "GibbsResult", "MetricsReport", "NonPositiveMax", "chain_marginal", "enumerated_marginal",
    "env_gradcheck", "evaluate", "gibbs_toy", "nearest_rank", "normalize_costs", "test_set",
    "total_variation",
]
