"""Finite-difference checks of environment cost gradients at prior samples."""

from __future__ import annotations

import numpy as np

from ..core import RngStream, stream_id
from ..grad import check_gradient


def env_gradcheck(env, samples: int = 20, seed: int = 0, h: float | None = None) -> np.ndarray:
    """Relative gradient error of ``J`` w.r.t. ``[theta, phi]`` at ``samples``
    independent prior draws. ``h`` defaults to the environment's own step."""
    h = env.gradcheck_step if h is None else h
    errors = []
    for s in range(samples):
        rng = RngStream(seed, stream_id("gradcheck", s))
        z = np.concatenate([env.sample_theta(rng), env.sample_phi(rng)])
        errors.append(check_gradient(env.joint_cost, z, h=h, vectorized=True))
    return np.array(errors)
