"""Small environments with known answers: a discrete cost table and 1D landscapes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .. import grad as ad
from .base import Environment, GaussianPrior


class IndexOutOfBounds(IndexError):
    pass


def toy_cost(theta: int, phi: int, table) -> float:
    table = np.asarray(table, dtype=float)
    if not (0 <= theta < table.shape[0] and 0 <= phi < table.shape[1]):
        raise IndexOutOfBounds(f"({theta}, {phi}) outside a {table.shape} table")
    return float(table[theta, phi])


def _normalize(w):
    w = np.asarray(w, dtype=float)
    return w / w.sum()


@dataclass(frozen=True)
class TableToy:
    """Finite policy/environment spaces with cost ``table[theta, phi]``.

    Conditionals use the relu hinge and a single opposing sample, which makes
    the two-stage Gibbs sampler exactly enumerable.
    """

    table: np.ndarray
    threshold: float
    prior_theta: np.ndarray | None = None
    prior_phi: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        if t.ndim != 2 or t.shape[0] > 100 or t.shape[1] > 100 or 0 in t.shape:
            raise ValueError("table must be 2D with at most 100 states per axis")
        object.__setattr__(self, "table", t)
        for name, n in (("prior_theta", t.shape[0]), ("prior_phi", t.shape[1])):
            p = getattr(self, name)
            p = np.full(n, 1.0 / n) if p is None else _normalize(p)
            if p.shape != (n,) or np.any(p < 0):
                raise ValueError(f"{name} must be a non-negative vector of length {n}")
            object.__setattr__(self, name, p)

    @property
    def shape(self):
        return self.table.shape

    def cost(self, theta: int, phi: int) -> float:
        return toy_cost(theta, phi, self.table)

    def repair_weights(self) -> np.ndarray:
        """Matrix ``R[theta, phi] = exp(-relu(J - J*))``."""
        return np.exp(-np.maximum(self.table - self.threshold, 0.0))

    def failure_weights(self) -> np.ndarray:
        """Matrix ``F[theta, phi] = exp(-relu(J* - J))``."""
        return np.exp(-np.maximum(self.threshold - self.table, 0.0))

    def repair_conditional(self, phi: int) -> np.ndarray:
        if not 0 <= phi < self.shape[1]:
            raise IndexOutOfBounds(f"phi index {phi} out of range")
        return _normalize(self.prior_theta * self.repair_weights()[:, phi])

    def failure_conditional(self, theta: int) -> np.ndarray:
        if not 0 <= theta < self.shape[0]:
            raise IndexOutOfBounds(f"theta index {theta} out of range")
        return _normalize(self.prior_phi * self.failure_weights()[theta])


class FunctionEnv(Environment):
    """Environment from a plain cost callable and diagonal Gaussian priors.

    ``cost_fn(theta, phi)`` must broadcast over leading axes and be written
    with :mod:`radium.grad` primitives when gradients are needed.
    """

    def __init__(self, cost_fn: Callable, theta_mean, phi_mean, theta_std=1.0, phi_std=1.0,
                 name="function"):
        self.name = name
        self._fn = cost_fn
        self.prior_theta = GaussianPrior(np.atleast_1d(theta_mean), theta_std)
        self.prior_phi = GaussianPrior(np.atleast_1d(phi_mean), phi_std)
        self.params = {}

    def cost(self, theta, phi):
        self.check_dims(theta, phi)
        return self._fn(theta, phi)


class BimodalEnv(Environment):
    """1D failure landscape with two separated failure modes.

    Mode A is a high plateau in the far left tail of the standard normal
    prior (about 1% of prior mass); mode B is a narrow bump just above the
    threshold next to it. Tempered failure sampling splits its mass roughly
    evenly between them, while plain gradient ascent from prior samples ends
    almost entirely on the B side because that is where the prior mass is.
    The policy parameter is present for interface reasons only.
    """

    def __init__(self, plateau_edge=-2.4, plateau_width=0.08, plateau_height=13.0,
                 bump_center=-1.85, bump_width=0.2, bump_height=10.2, threshold=10.0, name="bimodal"):
        self.name = name
        self.a, self.w, self.ha = float(plateau_edge), float(plateau_width), float(plateau_height)
        self.b, self.s, self.hb = float(bump_center), float(bump_width), float(bump_height)
        self.threshold = float(threshold)
        self.prior_theta = GaussianPrior(np.zeros(1), 1.0)
        self.prior_phi = GaussianPrior(np.zeros(1), 1.0)
        self.params = dict(plateau_edge=self.a, plateau_width=self.w, plateau_height=self.ha,
                           bump_center=self.b, bump_width=self.s, bump_height=self.hb,
                           threshold=self.threshold)
        grid = np.linspace(self.a - 0.2, self.b, 20001)
        self.separator = float(grid[np.argmin(self.landscape(grid))])

    def landscape(self, x):
        d = (x - self.b) / self.s
        return self.ha * ad.sigmoid((self.a - x) / self.w) + self.hb * ad.exp(-0.5 * d * d)

    def cost(self, theta, phi):
        self.check_dims(theta, phi)
        return self.landscape(phi[..., 0]) + 0.0 * theta[..., 0]

    def mode_of(self, phi) -> np.ndarray:
        """0 for the plateau side of the separating dip, 1 for the bump side."""
        return (np.asarray(phi, dtype=float)[..., 0] >= self.separator).astype(int)
