"""Two-stage Gibbs sampler on a discrete cost table, compared with the
closed-form policy marginal obtained by summing the joint over phi."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import RngStream, stream_id
from ..envs.toy import TableToy


def total_variation(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float)).sum())


def enumerated_marginal(toy: TableToy) -> np.ndarray:
    """Closed-form theta marginal by direct summation over phi:

        m(theta) ∝ p(theta) * sum_phi p(phi) exp(-relu(J* - J)) / sum_phi p(phi) exp(J - J*)
    """
    t, js = toy.table, toy.threshold
    num = (toy.prior_phi * toy.failure_weights()).sum(axis=1)
    # shift by the max for overflow safety; it cancels after normalizing
    z = t - js
    shift = z.max()
    den = (toy.prior_phi * np.exp(z - shift)).sum(axis=1)
    m = toy.prior_theta * num / den
    return m / m.sum()


def chain_marginal(toy: TableToy) -> np.ndarray:
    """Exact stationary theta marginal of the Gibbs chain (left eigenvector of
    ``P = F R^T`` with ``F`` the failure and ``R`` the repair conditionals)."""
    F = toy.prior_phi * toy.failure_weights()
    F = F / F.sum(axis=1, keepdims=True)
    R = toy.prior_theta[:, None] * toy.repair_weights()
    R = R / R.sum(axis=0, keepdims=True)
    P = F @ R.T
    n = P.shape[0]
    # solve pi (P - I) = 0 with sum(pi) = 1
    A = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi = np.linalg.lstsq(A, b, rcond=None)[0]
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


@dataclass
class GibbsResult:
    empirical: np.ndarray
    enumerated: np.ndarray
    stationary: np.ndarray
    tv: float
    tv_stationary: float
    rounds: int
    seed: int

    def to_dict(self) -> dict:
        return {"empirical": self.empirical.tolist(), "enumerated": self.enumerated.tolist(),
                "stationary": self.stationary.tolist(), "tv": self.tv,
                "tv_stationary": self.tv_stationary, "rounds": self.rounds, "seed": self.seed}


def _draw(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draws, one per row of ``cdf``."""
    idx = (u[:, None] > cdf).sum(axis=1)
    return np.minimum(idx, cdf.shape[1] - 1)


def gibbs_toy(table, threshold: float, rounds: int = 100_000, seed: int = 0,
              prior_theta=None, prior_phi=None, burn_in: int = 100) -> GibbsResult:
    """Alternate exact draws ``theta ~ repair(.|phi)`` and ``phi ~ failure(.|theta)``
    and tally the visited policies.

    ``burn_in`` initial rounds are discarded. The first state is drawn from the
    priors.
    """
    if rounds < 1:
        raise ValueError("rounds must be positive")
    toy = TableToy(table, threshold, prior_theta, prior_phi)
    rng = RngStream(seed, stream_id("gibbs-toy"))
    rep = toy.prior_theta[:, None] * toy.repair_weights()
    rep_cdf = np.cumsum(rep / rep.sum(axis=0, keepdims=True), axis=0).T  # row per phi
    fail = toy.prior_phi * toy.failure_weights()
    fail_cdf = np.cumsum(fail / fail.sum(axis=1, keepdims=True), axis=1)  # row per theta
    phi = int(_draw(np.cumsum(toy.prior_phi)[None], rng.uniform(1))[0])
    counts = np.zeros(toy.shape[0])
    u = rng.uniform((rounds + burn_in, 2))
    for i in range(rounds + burn_in):
        theta = int(np.searchsorted(rep_cdf[phi], u[i, 0], side="right"))
        theta = min(theta, toy.shape[0] - 1)
        phi = min(int(np.searchsorted(fail_cdf[theta], u[i, 1], side="right")), toy.shape[1] - 1)
        if i >= burn_in:
            counts[theta] += 1
    empirical = counts / counts.sum()
    enum = enumerated_marginal(toy)
    stat = chain_marginal(toy)
    return GibbsResult(empirical, enum, stat, total_variation(empirical, enum),
                       total_variation(empirical, stat), rounds, seed)
