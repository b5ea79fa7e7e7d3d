"""Benchmark environments and a name registry."""

from ..core import UnknownEnvironment
from .base import CountingEnv, DimensionMismatch, Environment, GaussianPrior, NonFiniteState, TrajectoryRollout
from .formation import FormationEnv, WindField, algebraic_connectivity
from .power import GridCase, PowerGridEnv, load_case, parse_case
from .search import SearchEnv, interpolate_trajectory
from .toy import BimodalEnv, FunctionEnv, IndexOutOfBounds, TableToy, toy_cost

_REGISTRY = {
    "search_3v5": lambda p: SearchEnv(**{"n_seekers": 6, "n_hiders": 10, "name": "search_3v5", **p}),
    "search_12v20": lambda p: SearchEnv(**{"n_seekers": 12, "n_hiders": 20, "name": "search_12v20", **p}),
    "formation_5": lambda p: FormationEnv(**{"n_agents": 5, "waypoints": 3, "name": "formation_5", **p}),
    "formation_10": lambda p: FormationEnv(**{"n_agents": 10, "waypoints": 5, "name": "formation_10", **p}),
    "power_14": lambda p: PowerGridEnv(**{"name": "power_14", **p}),
    "bimodal": lambda p: BimodalEnv(**{"name": "bimodal", **p}),
}

ENVIRONMENTS = tuple(_REGISTRY)


def make_env(name: str, params: dict | None = None) -> Environment:
    """Build a registered environment; ``params`` override constructor defaults."""
    if name not in _REGISTRY:
        raise UnknownEnvironment(f"unknown environment {name!r}; known: {sorted(_REGISTRY)}")
    try:
        return _REGISTRY[name](dict(params or {}))
    except TypeError as exc:
        raise ValueError(f"bad parameters for {name}: {exc}") from None


__all__ = [
    "BimodalEnv", "CountingEnv", "DimensionMismatch", "ENVIRONMENTS", "Environment", "FormationEnv",
    "FunctionEnv", "GaussianPrior", "GridCase", "IndexOutOfBounds", "NonFiniteState", "PowerGridEnv",
    "SearchEnv", "TableToy", "TrajectoryRollout", "WindField", "algebraic_connectivity",
    "interpolate_trajectory", "load_case", "make_env", "parse_case", "toy_cost",
]
