"""Formation flight through an uncertain wind field while staying connected."""

from __future__ import annotations

import numpy as np

from .. import grad as ad
from ..core import RngStream, stream_id
from .base import Environment, GaussianPrior, TrajectoryRollout
from .search import interpolation_matrix

GRID = (32, 20)


def smoothing_matrix(n: int, width: float, radius: int) -> np.ndarray:
    """Truncated Gaussian smoother; rows scaled so white noise keeps unit variance."""
    idx = np.arange(n)
    dist = np.abs(idx[:, None] - idx[None, :])
    K = np.where(dist <= radius, np.exp(-0.5 * (dist / width) ** 2), 0.0)
    return K / np.sqrt(np.sum(K * K, axis=1, keepdims=True))


def _catmull_rom_weights(t):
    """Weights of the four nodes around a cell, for offset ``t`` in [0, 1]."""
    t2 = t * t
    t3 = t2 * t
    return (0.5 * (2.0 * t2 - t3 - t), 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
            0.5 * (4.0 * t2 - 3.0 * t3 + t), 0.5 * (t3 - t2))


class WindField:
    """A 32x20 grid of 2D wind vectors over a rectangle, interpolated with cubic
    (Catmull-Rom) weights.

    The 1280 raw parameters are independent standard normals; a fixed
    separable smoother turns them into a spatially correlated field.
    """

    def __init__(self, lower=(0.0, 0.0), upper=(16.0, 10.0), scale=1.0, width=1.5, radius=3):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.shape = GRID
        self.spacing = (self.upper - self.lower) / (np.array(GRID) - 1)
        self.scale = float(scale)
        self.Kx = smoothing_matrix(GRID[0], width, radius)
        self.Ky = smoothing_matrix(GRID[1], width, radius)

    @property
    def dim(self) -> int:
        return 2 * GRID[0] * GRID[1]

    def grid(self, phi):
        """Smoothed wind vectors, shape ``(..., nx, ny, 2)``."""
        raw = ad.reshape(phi, np.shape(phi)[:-1] + (2,) + GRID)
        smooth = ad.matmul(ad.matmul(self.Kx, raw), self.Ky.T) * self.scale
        return ad.moveaxis(smooth, -3, -1)

    def interpolate(self, grid, pos):
        """Wind at ``pos`` (B, A, 2) from a flattened-batch grid (B, nx, ny, 2).

        Catmull-Rom interpolation: exact at grid nodes and continuously
        differentiable across cell edges (plain bilinear weights put kinks in
        the cost wherever an agent crosses a grid line). Edge nodes are
        replicated, and positions outside the rectangle see the wind at the
        nearest edge.
        """
        B, A = np.shape(pos)[:2]
        u = (pos - self.lower) / self.spacing
        uv = ad.value(u)
        cell = np.clip(np.floor(uv), 0, np.array(GRID) - 2).astype(int)
        frac = ad.clip(u - cell, 0.0, 1.0)
        wx = _catmull_rom_weights(frac[..., 0:1])
        wy = _catmull_rom_weights(frac[..., 1:2])
        b = np.broadcast_to(np.arange(B)[:, None], (B, A))
        out = 0.0
        for i in range(4):
            ix = np.clip(cell[..., 0] + i - 1, 0, GRID[0] - 1)
            row = 0.0
            for j in range(4):
                iy = np.clip(cell[..., 1] + j - 1, 0, GRID[1] - 1)
                row = row + grid[(b, ix, iy)] * wy[j]
            out = out + row * wx[i]
        return out


def algebraic_connectivity(pos, comm_radius: float, width: float | None = None, hard: bool = False):
    """Second-smallest Laplacian eigenvalue of the communication graph.

    Edge weights are ``sigmoid((comm_radius - d_ij) / width)`` (default width
    ``0.1 * comm_radius``); ``hard=True`` uses 0/1 weights instead.
    """
    pos_shape = np.shape(pos)
    A = pos_shape[-2]
    if A < 2:
        raise ValueError("need at least two agents")
    width = 0.1 * comm_radius if width is None else width
    a = ad.reshape(pos, pos_shape[:-2] + (A, 1, 2))
    b = ad.reshape(pos, pos_shape[:-2] + (1, A, 2))
    diff = a - b
    eye = np.eye(A)
    d = ad.sqrt(ad.sum(diff * diff, axis=-1) + eye)
    if hard:
        w = (ad.value(d) <= comm_radius) * (1.0 - eye)
    else:
        w = ad.sigmoid((comm_radius - d) / width) * (1.0 - eye)
    deg = ad.sum(w, axis=-1)
    L = ad.reshape(deg, np.shape(deg) + (1,)) * eye - w
    return ad.lambda2(L)


class FormationEnv(Environment):
    """Single-integrator agents track waypoint references through wind.

    ``theta`` holds ``waypoints`` 2D waypoints per agent (the reference starts
    at the agent's fixed start position); ``phi`` is the raw wind field. The
    cost is the mean final squared distance to each agent's goal plus
    ``k * mean_t relu(lambda_min - lambda2(t))``.
    """

    def __init__(self, n_agents=5, waypoints=3, horizon=50, dt=0.2, gain=2.0, comm_radius=2.0,
                 edge_width=None, lambda_min=0.1, k=200.0, wind_scale=2.0, theta_std=0.5,
                 theta0_spread=1.0, theta0_seed=0, name="formation_5"):
        self.name = name
        self.n_agents, self.n_waypoints, self.horizon = int(n_agents), int(waypoints), int(horizon)
        self.dt, self.gain = float(dt), float(gain)
        self.comm_radius = float(comm_radius)
        self.edge_width = 0.1 * self.comm_radius if edge_width is None else float(edge_width)
        self.lambda_min, self.k = float(lambda_min), float(k)
        self.wind = WindField(scale=wind_scale)
        angles = 2 * np.pi * np.arange(self.n_agents) / self.n_agents
        ring = 0.5 * np.stack([np.cos(angles), np.sin(angles)], axis=-1)
        self.start = np.array([2.0, 5.0]) + ring
        self.goal = np.array([14.0, 5.0]) + ring
        # reference through [start, waypoints...]
        self._M = interpolation_matrix(self.n_waypoints + 1, self.horizon)
        frac = np.arange(1, self.n_waypoints + 1) / self.n_waypoints
        nominal = self.start[:, None, :] + frac[None, :, None] * (self.goal - self.start)[:, None, :]
        rng = RngStream(theta0_seed, stream_id("formation-theta0", self.n_agents))
        theta0 = nominal.reshape(-1) + theta0_spread * rng.normal(nominal.size)
        self.prior_theta = GaussianPrior(theta0, theta_std)
        self.prior_phi = GaussianPrior(np.zeros(self.wind.dim), 1.0)
        self.params = dict(n_agents=self.n_agents, waypoints=self.n_waypoints, horizon=self.horizon,
                           dt=self.dt, gain=self.gain, comm_radius=self.comm_radius,
                           edge_width=self.edge_width, lambda_min=self.lambda_min, k=self.k,
                           wind_scale=self.wind.scale, theta_std=float(theta_std),
                           theta0_spread=float(theta0_spread), theta0_seed=int(theta0_seed))

    def references(self, theta):
        """Reference positions ``(..., A, T+1, 2)``."""
        wp = ad.reshape(theta, np.shape(theta)[:-1] + (self.n_agents, self.n_waypoints, 2))
        start = np.broadcast_to(self.start[:, None, :], np.shape(theta)[:-1] + (self.n_agents, 1, 2))
        return ad.matmul(self._M, ad.concatenate([start, wp], axis=-2))

    def _simulate(self, theta, phi, record: bool = False):
        self.check_dims(theta, phi)
        batch = np.broadcast_shapes(np.shape(theta)[:-1], np.shape(phi)[:-1])
        B = int(np.prod(batch))
        theta = ad.reshape(ad.broadcast_to(theta, batch + (self.dim_theta,)), (B, self.dim_theta))
        phi = ad.reshape(ad.broadcast_to(phi, batch + (self.dim_phi,)), (B, self.dim_phi))
        dtype = np.result_type(ad.value(theta), ad.value(phi))
        ref = self.references(theta)  # (B, A, T+1, 2)
        grid = self.wind.grid(phi)
        x = np.broadcast_to(self.start, (B, self.n_agents, 2)).astype(dtype)
        connectivity = 0.0
        states, lam = [x], []
        for t in range(self.horizon):
            u = self.gain * (ref[:, :, t + 1, :] - x) + self.wind.interpolate(grid, x)
            x = x + self.dt * u
            l2 = algebraic_connectivity(x, self.comm_radius, self.edge_width)
            connectivity = connectivity + ad.relu(self.lambda_min - l2)
            if record:
                states.append(ad.value(x))
                lam.append(ad.value(l2))
        miss = x - self.goal
        goal_term = ad.mean(ad.sum(miss * miss, axis=-1), axis=-1)
        J = goal_term + (self.k / self.horizon) * connectivity
        J = ad.reshape(J, batch)
        if record:
            return J, np.stack(states, axis=1), np.stack(lam, axis=1)
        return J

    def cost(self, theta, phi):
        return self._simulate(theta, phi)

    def rollout(self, theta, phi) -> TrajectoryRollout:
        theta = np.asarray(theta, dtype=float)
        phi = np.asarray(phi, dtype=float)
        J, states, lam = self._simulate(theta[None], phi[None], record=True)
        lam0 = np.concatenate([[float(algebraic_connectivity(self.start, self.comm_radius,
                                                             self.edge_width))], lam[0]])
        return TrajectoryRollout(states[0], {"lambda2": lam0, "cost": float(J[0])})
