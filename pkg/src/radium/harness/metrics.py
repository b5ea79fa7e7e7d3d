"""Test-set metrics and cross-method cost normalization."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..core import RngStream, stream_id


class NonPositiveMax(ValueError):
    pass


def nearest_rank(values, q: float) -> float:
    """Nearest-rank percentile: the ``ceil(q/100 * n)``-th smallest value."""
    v = np.sort(np.asarray(values, dtype=float).reshape(-1))
    if v.size == 0:
        raise ValueError("no values")
    if not 0 < q <= 100:
        raise ValueError("q must lie in (0, 100]")
    rank = max(1, math.ceil(round(q / 100 * v.size, 9)))
    return float(v[rank - 1])


def test_set(env, size: int, seed: int) -> np.ndarray:
    """``size`` i.i.d. prior samples of phi; identical for every method given ``seed``."""
    if size < 1:
        raise ValueError("size must be >= 1")
    return env.sample_phi(RngStream(seed, stream_id("test-set")), size)


def array_hash(a: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(a, dtype=float).tobytes()).hexdigest()[:16]


@dataclass(frozen=True)
class MetricsReport:
    failure_rate: float
    mean_cost: float
    p99_cost: float
    max_cost: float
    per_sample_costs: np.ndarray = field(repr=False)
    test_seed: int
    threshold: float
    config_hash: str = ""
    test_set_hash: str = ""
    method: str = ""
    scale: float = 1.0  # costs are divided by this (1 when unnormalized)

    @classmethod
    def from_costs(cls, costs, threshold: float, test_seed: int = 0, **extra) -> "MetricsReport":
        c = np.asarray(costs, dtype=float).reshape(-1)
        if not np.all(np.isfinite(c)):
            raise FloatingPointError("non-finite cost in the test set")
        return cls(float(np.mean(c >= threshold)), float(c.mean()), nearest_rank(c, 99),
                   float(c.max()), c, int(test_seed), float(threshold), **extra)

    @property
    def size(self) -> int:
        return self.per_sample_costs.size

    def to_dict(self) -> dict:
        return {
            "method": self.method, "failure_rate": self.failure_rate, "mean_cost": self.mean_cost,
            "p99_cost": self.p99_cost, "max_cost": self.max_cost, "size": self.size,
            "threshold": self.threshold, "test_seed": self.test_seed, "config_hash": self.config_hash,
            "test_set_hash": self.test_set_hash, "scale": self.scale,
            "per_sample_costs": self.per_sample_costs.tolist(),
        }


def evaluate(theta, env, size: int = 1000, seed: int = 0, threshold: float | None = None,
             batch: int = 250, config_hash: str = "", method: str = "") -> MetricsReport:
    """Cost of ``theta`` on a fresh test set of prior samples.

    Failure means ``J >= threshold`` (defaults to ``env.threshold`` when the
    environment defines one). Evaluation failures propagate.
    """
    if threshold is None:
        threshold = getattr(env, "threshold", None)
        if threshold is None:
            raise ValueError("a failure threshold is required")
    theta = np.asarray(theta, dtype=float).reshape(1, -1)
    phis = test_set(env, size, seed)
    costs = np.concatenate([np.asarray(env.cost(theta, phis[i:i + batch]), dtype=float).reshape(-1)
                            for i in range(0, size, batch)])
    return MetricsReport.from_costs(costs, threshold, seed, config_hash=config_hash,
                                    test_set_hash=array_hash(phis), method=method)


def normalize_costs(reports):
    """Divide every cost statistic by the largest per-sample cost over all reports.

    Returns ``(normalized_reports, factor)``. Raises :class:`NonPositiveMax`
    when that maximum is not positive; callers may then keep the raw reports.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("need at least one report")
    factor = max(float(np.max(r.per_sample_costs)) for r in reports)
    if not factor > 0:
        raise NonPositiveMax(f"largest cost {factor} is not positive")
    out = [replace(r, mean_cost=r.mean_cost / factor, p99_cost=r.p99_cost / factor,
                   max_cost=r.max_cost / factor, per_sample_costs=r.per_sample_costs / factor,
                   scale=r.scale * factor)
           for r in reports]
    return out, factor
