"""Comparison methods: fixed random counterexamples (GD_r), alternating
adversarial gradient steps (GD_a) and a score-function adversary (L2C)."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import grad as ad
from .core import ConfigError, InvalidValue, RngStream, UnknownKey, stream_id
from .envs.base import CountingEnv

METHODS = ("gdr", "gda", "l2c")


@dataclass(frozen=True)
class BaselineConfig:
    method: str = "gda"
    budget: int = 10_000  # individual cost evaluations
    lr_theta: float = 1e-2
    lr_phi: float = 1e-2
    counterexamples: int = 10
    inner_theta: int = 1  # theta steps per alternation block
    inner_phi: int = 1  # phi steps per block (0 disables the adversary)
    box: float = 3.0  # phi stays within prior mean +- box * std
    sigma: float = 0.1  # REINFORCE perturbation scale
    batch: int = 8  # REINFORCE samples per estimate
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidValue(f"method must be one of {METHODS}")
        if self.budget <= 0:
            raise InvalidValue("budget must be positive")
        if self.lr_theta < 0 or self.lr_phi < 0:
            raise InvalidValue("learning rates must be non-negative")
        if self.counterexamples < 1 or self.inner_theta < 0 or self.inner_phi < 0:
            raise InvalidValue("counterexamples >= 1 and block lengths >= 0 required")
        if self.inner_theta + self.inner_phi == 0:
            raise InvalidValue("at least one block must be non-empty")
        if self.sigma <= 0 or self.batch < 2 or self.box <= 0:
            raise InvalidValue("sigma > 0, batch >= 2 and box > 0 required")

    @classmethod
    def from_dict(cls, doc: dict) -> "BaselineConfig":
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise UnknownKey(", ".join(sorted(unknown)))
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class BaselineResult:
    method: str
    theta: np.ndarray
    phis: np.ndarray
    evaluations: int
    seed: int = 0
    config_hash: str = ""
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"method": self.method, "seed": self.seed, "config_hash": self.config_hash,
                "evaluations": self.evaluations, "best_policy": self.theta.tolist(),
                "failures": self.phis.tolist(), "history": self.history}


class _Budget:
    def __init__(self, total: int):
        self.total, self.used = int(total), 0

    @property
    def left(self) -> int:
        return self.total - self.used

    def take(self, n: int, minimum: int = 1) -> int:
        """Grant up to ``n`` evaluations, or none if fewer than ``minimum`` remain."""
        k = min(n, self.left)
        if k < minimum:
            return 0
        self.used += k
        return k


def _counterexamples(env, cfg: BaselineConfig) -> np.ndarray:
    return env.sample_phi(RngStream(cfg.seed, stream_id("counterexamples")), cfg.counterexamples)


def _theta_grad(env, theta, phis):
    """Gradient of the mean cost over ``phis`` with respect to ``theta``."""
    return ad.grad(lambda t: ad.mean(env.cost(ad.reshape(t, (1, -1)), phis)), theta)


def _phi_grads(env, theta, phis):
    """Per-row gradients of ``J(theta, phi_i)`` with respect to each ``phi_i``."""
    return ad.grad(lambda p: ad.sum(env.cost(theta[None], p)), phis)


def _project(env, phis, box):
    lo = env.prior_phi.mean - box * env.prior_phi.std
    hi = env.prior_phi.mean + box * env.prior_phi.std
    return np.clip(phis, lo, hi)


def gd_random(theta0, env, cfg: BaselineConfig) -> BaselineResult:
    """Gradient descent on the mean cost over one fixed set of prior samples."""
    return _alternate(theta0, env, cfg.__class__(**{**cfg.to_dict(), "inner_phi": 0, "inner_theta": 1}), "gdr")


def gd_adversarial(theta0, env, cfg: BaselineConfig) -> BaselineResult:
    """Alternate ``inner_phi`` ascent steps on every counterexample with
    ``inner_theta`` descent steps on the policy, until the budget is spent."""
    return _alternate(theta0, env, cfg, "gda")


def _alternate(theta0, env, cfg, name):
    counted = CountingEnv(env)
    budget = _Budget(cfg.budget)
    theta = np.array(theta0, dtype=float)
    phis = _counterexamples(env, cfg)
    m = len(phis)
    while budget.left > 0:
        for _ in range(cfg.inner_phi):
            k = budget.take(m)
            if k == 0:
                break
            g = _phi_grads(counted, theta, phis[:k])
            phis[:k] = _project(env, phis[:k] + cfg.lr_phi * g, cfg.box)
        for _ in range(cfg.inner_theta):
            k = budget.take(m)
            if k == 0:
                break
            theta = theta - cfg.lr_theta * _theta_grad(counted, theta, phis[:k])
    return BaselineResult(name, theta, phis, counted.evaluations)


# ---------------------------------------------------------------------------
# score-function (REINFORCE) estimators


def reinforce_gradient(fn, x, sigma: float, batch: int, rng: RngStream):
    """Baseline-subtracted score-function estimate of ``grad E[fn(x + sigma z)]``.

    ``fn`` maps a (batch, d) array to (batch,) values. Returns
    ``(1/B) sum_b (f_b - mean f) z_b / sigma``.
    """
    x = np.asarray(x, dtype=float)
    z = rng.normal((batch, x.shape[-1]))
    f = np.asarray(fn(x + sigma * z), dtype=float).reshape(batch)
    return ((f - f.mean())[:, None] * z).mean(axis=0) / sigma


def reinforce_adversary(theta_fixed, env, cfg: BaselineConfig, phis=None) -> BaselineResult:
    """Raise the cost of each counterexample with score-function steps only.

    The last estimates may use a smaller batch so the whole budget is spent.
    """
    counted = CountingEnv(env)
    budget = _Budget(cfg.budget)
    theta = np.asarray(theta_fixed, dtype=float)
    phis = _counterexamples(env, cfg) if phis is None else np.array(phis, dtype=float)
    rngs = [RngStream(cfg.seed, stream_id("reinforce-phi", i)) for i in range(len(phis))]
    while budget.left >= 2:
        _adversary_sweep(counted, env, theta, phis, rngs, cfg, budget)
    return BaselineResult("l2c-adversary", theta.copy(), phis, counted.evaluations)


def _adversary_sweep(counted, env, theta, phis, rngs, cfg, budget):
    for i in range(len(phis)):
        # absorb a lone leftover evaluation so the budget is spent exactly
        want = cfg.batch + 1 if budget.left == cfg.batch + 1 else cfg.batch
        b = budget.take(want, 2)
        if not b:
            return
        g = reinforce_gradient(lambda p: counted.cost(theta[None], p), phis[i], cfg.sigma, b, rngs[i])
        phis[i] = _project(env, phis[i] + cfg.lr_phi * g, cfg.box)


def l2c_repair(theta0, env, cfg: BaselineConfig) -> BaselineResult:
    """Black-box repair: score-function ascent on the counterexamples
    alternating with score-function descent on the policy's mean cost."""
    counted = CountingEnv(env)
    budget = _Budget(cfg.budget)
    theta = np.array(theta0, dtype=float)
    phis = _counterexamples(env, cfg)
    rng_phi = [RngStream(cfg.seed, stream_id("reinforce-phi", i)) for i in range(len(phis))]
    rng_theta = RngStream(cfg.seed, stream_id("reinforce-theta"))
    m = len(phis)
    while budget.left >= 2:
        for _ in range(cfg.inner_phi):
            _adversary_sweep(counted, env, theta, phis, rng_phi, cfg, budget)
        for _ in range(cfg.inner_theta):
            b = min(cfg.batch, budget.left // m)
            if b < 2:
                break
            budget.used += b * m
            g = reinforce_gradient(lambda t: counted.cost(t[:, None, :], phis[None]).mean(axis=1),
                                   theta, cfg.sigma, b, rng_theta)
            theta = theta - cfg.lr_theta * g
        if cfg.inner_phi == 0 and budget.left < 2 * m:
            break
    return BaselineResult("l2c", theta, phis, counted.evaluations)


def run_baseline(theta0, env, cfg: BaselineConfig) -> BaselineResult:
    out = {"gdr": gd_random, "gda": gd_adversarial, "l2c": l2c_repair}[cfg.method](theta0, env, cfg)
    out.seed = cfg.seed
    return out
