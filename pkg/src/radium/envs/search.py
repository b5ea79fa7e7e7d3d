"""Multi-agent search: seekers (policy) sweep a region to find hiders (environment)."""

from __future__ import annotations

import numpy as np

from .. import grad as ad
from ..core import RngStream, stream_id
from .base import DimensionMismatch, Environment, GaussianPrior, TrajectoryRollout


def interpolation_matrix(n_waypoints: int, horizon: int) -> np.ndarray:
    """Matrix ``M`` (T+1, W) so that ``M @ waypoints`` is the piecewise-linear path
    through the waypoints sampled at T+1 uniform times."""
    if n_waypoints < 1 or horizon < 1:
        raise ValueError("need at least one waypoint and a positive horizon")
    M = np.zeros((horizon + 1, n_waypoints))
    if n_waypoints == 1:
        M[:, 0] = 1.0
        return M
    s = np.linspace(0.0, n_waypoints - 1, horizon + 1)
    k = np.minimum(np.floor(s).astype(int), n_waypoints - 2)
    frac = s - k
    rows = np.arange(horizon + 1)
    M[rows, k] = 1.0 - frac
    M[rows, k + 1] += frac
    return M


def interpolate_trajectory(waypoints, horizon: int, agents: int = 1):
    """Piecewise-linear paths from a flat waypoint slice ``(..., agents * W * 2)``.

    Returns positions ``(..., T+1, 2)`` for one agent, ``(..., agents, T+1, 2)``
    otherwise; endpoints coincide with the first and last waypoints.
    """
    size = np.shape(waypoints)[-1]
    if size == 0 or size % (2 * agents):
        raise DimensionMismatch(f"{size} parameters do not split into {agents} agents of 2D waypoints")
    n_waypoints = size // (2 * agents)
    wp = ad.reshape(waypoints, np.shape(waypoints)[:-1] + (agents, n_waypoints, 2))
    out = ad.matmul(interpolation_matrix(n_waypoints, horizon), wp)
    return out[..., 0, :, :] if agents == 1 else out


class SearchEnv(Environment):
    """Seekers follow piecewise-linear paths through ``waypoints`` points each;
    hiders do the same. The cost is the soft-max over hiders of each hider's
    soft-min distance to any seeker at any time, minus the sensing radius;
    a negative cost means every hider was approached within range.
    """

    def __init__(self, n_seekers=6, n_hiders=10, waypoints=5, horizon=20, r_sense=2.1,
                 beta=20.0, half_width=10.0, theta_std=2.5, phi_std=None,
                 theta0_seed=0, name="search_3v5"):
        self.name = name
        self.n_seekers, self.n_hiders = int(n_seekers), int(n_hiders)
        self.n_waypoints, self.horizon = int(waypoints), int(horizon)
        self.r_sense, self.beta = float(r_sense), float(beta)
        self.half_width = float(half_width)
        self._M = interpolation_matrix(self.n_waypoints, self.horizon)
        dtheta = 2 * self.n_seekers * self.n_waypoints
        dphi = 2 * self.n_hiders * self.n_waypoints
        # random initial search pattern inside the region
        rng = RngStream(theta0_seed, stream_id("search-theta0", self.n_seekers))
        theta0 = self.half_width * (2.0 * rng.uniform(dtheta) - 1.0)
        self.prior_theta = GaussianPrior(theta0, theta_std)
        self.prior_phi = GaussianPrior(np.zeros(dphi), self.half_width / 2 if phi_std is None else phi_std)
        self.params = dict(n_seekers=self.n_seekers, n_hiders=self.n_hiders, waypoints=self.n_waypoints,
                           horizon=self.horizon, r_sense=self.r_sense, beta=self.beta,
                           half_width=self.half_width, theta_std=float(theta_std),
                           phi_std=float(self.prior_phi.std[0]), theta0_seed=int(theta0_seed))

    def paths(self, flat, agents):
        wp = ad.reshape(flat, np.shape(flat)[:-1] + (agents, self.n_waypoints, 2))
        return ad.matmul(self._M, wp)  # (..., agents, T+1, 2)

    def cost(self, theta, phi):
        self.check_dims(theta, phi)
        seekers = self.paths(theta, self.n_seekers)
        hiders = self.paths(phi, self.n_hiders)
        # (..., H, T+1, S, 2)
        seekers = ad.moveaxis(seekers, -3, -2)
        diff = ad.reshape(hiders, np.shape(hiders)[:-1] + (1, 2)) \
            - ad.reshape(seekers, np.shape(seekers)[:-3] + (1,) + np.shape(seekers)[-3:])
        dist = ad.sqrt(ad.sum(diff * diff, axis=-1) + 1e-12)
        flat = ad.reshape(dist, np.shape(dist)[:-2] + (-1,))
        closest = ad.softmin(flat, self.beta, axis=-1)  # per hider
        return ad.softmax(closest, self.beta, axis=-1) - self.r_sense

    def rollout(self, theta, phi) -> TrajectoryRollout:
        seekers = np.moveaxis(self.paths(np.asarray(theta, float), self.n_seekers), -3, -2)
        hiders = np.moveaxis(self.paths(np.asarray(phi, float), self.n_hiders), -3, -2)
        d = np.linalg.norm(hiders[:, :, None, :] - seekers[:, None, :, :], axis=-1)
        return TrajectoryRollout(np.concatenate([seekers, hiders], axis=1),
                                 {"min_distance": d.min(axis=(1, 2))})
