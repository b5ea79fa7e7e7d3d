from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import grad as ad
from ..core import RngStream


class DimensionMismatch(ValueError):
    pass


class NonFiniteState(ValueError):
    pass


@dataclass(frozen=True)
class GaussianPrior:
    """Diagonal Gaussian; ``logpdf`` accepts arrays or tape variables."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        std = np.broadcast_to(np.asarray(self.std, dtype=float), mean.shape).copy()
        if np.any(std <= 0):
            raise ValueError("prior std must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def log_norm(self) -> float:
        return -float(np.sum(np.log(self.std))) - 0.5 * self.dim * math.log(2 * math.pi)

    def logpdf(self, x):
        z = (x - self.mean) / self.std
        return -0.5 * ad.sum(z * z, axis=-1) + self.log_norm

    def sample(self, rng: RngStream, n: int | None = None) -> np.ndarray:
        shape = (self.dim,) if n is None else (n, self.dim)
        return self.mean + self.std * rng.normal(shape)


@dataclass
class TrajectoryRollout:
    """States ``x_0..x_T`` (shape ``(T+1, agents, 2)``) plus per-step extras."""

    states: np.ndarray
    aux: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(np.isfinite(self.states)):
            raise NonFiniteState("rollout produced non-finite states")

    @property
    def horizon(self) -> int:
        return self.states.shape[0] - 1

    def to_csv(self, path, label: str = "agent"):
        """One row per timestep: t, then x/y of every agent, then scalar extras."""
        T1, A = self.states.shape[:2]
        scalars = {k: np.asarray(v) for k, v in self.aux.items() if np.shape(v) == (T1,)}
        cols = ["t"] + [f"{label}{a}_{c}" for a in range(A) for c in "xy"] + sorted(scalars)
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for t in range(T1):
                row = [str(t)] + [repr(float(v)) for v in self.states[t].reshape(-1)]
                row += [repr(float(scalars[k][t])) for k in sorted(scalars)]
                fh.write(",".join(row) + "\n")


class Environment:
    """Priors over policy/environment parameters and a deterministic cost.

    Subclasses set ``prior_theta``/``prior_phi`` and implement :meth:`cost`,
    which must broadcast over leading batch axes of ``theta`` and ``phi`` and
    be written with :mod:`radium.grad` primitives so gradients are available.
    """

    name = "environment"
    # finite-difference step for gradient checks; costs with relu kinks near
    # typical prior samples use a smaller one
    gradcheck_step = 1e-5
    prior_theta: GaussianPrior
    prior_phi: GaussianPrior

    @property
    def dim_theta(self) -> int:
        return self.prior_theta.dim

    @property
    def dim_phi(self) -> int:
        return self.prior_phi.dim

    @property
    def theta0(self) -> np.ndarray:
        return self.prior_theta.mean

    def log_prior_theta(self, theta):
        return self.prior_theta.logpdf(theta)

    def log_prior_phi(self, phi):
        return self.prior_phi.logpdf(phi)

    def sample_theta(self, rng: RngStream, n: int | None = None) -> np.ndarray:
        return self.prior_theta.sample(rng, n)

    def sample_phi(self, rng: RngStream, n: int | None = None) -> np.ndarray:
        return self.prior_phi.sample(rng, n)

    def cost(self, theta, phi):
        raise NotImplementedError

    def check_dims(self, theta, phi):
        if np.shape(theta)[-1] != self.dim_theta:
            raise DimensionMismatch(f"theta has {np.shape(theta)[-1]} entries, expected {self.dim_theta}")
        if np.shape(phi)[-1] != self.dim_phi:
            raise DimensionMismatch(f"phi has {np.shape(phi)[-1]} entries, expected {self.dim_phi}")

    def joint_cost(self, z):
        """Cost as a function of the concatenation ``[theta, phi]`` (for gradient checks)."""
        d = self.dim_theta
        return self.cost(z[..., :d], z[..., d:])

    def describe(self) -> dict:
        return {"name": self.name, "dim_theta": self.dim_theta, "dim_phi": self.dim_phi}


class CountingEnv:
    """Proxy that counts individual cost evaluations (batched calls count each element)."""

    def __init__(self, env: Environment):
        self._env = env
        self.evaluations = 0

    def cost(self, theta, phi):
        out = self._env.cost(theta, phi)
        self.evaluations += int(np.size(ad.value(out)))
        return out

    def joint_cost(self, z):
        d = self._env.dim_theta
        return self.cost(z[..., :d], z[..., d:])

    def __getattr__(self, name):
        return getattr(self._env, name)
