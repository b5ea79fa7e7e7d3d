"""Interleaved failure prediction and repair with tempering and quenching."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ExperimentConfig, RngStream, config_hash, stream_id
from .envs.base import CountingEnv, Environment
from .samplers import (
    FAILURE, REPAIR, ChainBatch, TemperedTarget, evaluate, reset_counts, run_chains,
    tempering_tau, with_target,
)

POLICY = "policy"
ENVIRONMENT = "environment"


@dataclass
class Population:
    """``n`` chains of one role plus the round they were last updated in."""

    chains: ChainBatch
    role: str
    round: int = 0
    tau: float = 0.0

    def __post_init__(self):
        if self.role not in (POLICY, ENVIRONMENT):
            raise ValueError(f"role must be {POLICY!r} or {ENVIRONMENT!r}")

    @property
    def positions(self) -> np.ndarray:
        return self.chains.position

    @property
    def particles(self):
        return self.chains.states()

    @property
    def acceptance(self) -> float:
        prop = self.chains.proposed.sum()
        return float(self.chains.accepted.sum() / prop) if prop else 0.0

    def __len__(self):
        return len(self.chains)


@dataclass
class RepairResult:
    best_policy: np.ndarray
    best_index: int
    policies: Population
    failures: Population
    failure_costs: np.ndarray  # final failures re-scored against best_policy
    history: list
    config_hash: str
    seed: int
    evaluations: int
    method: str = "radium"
    events: list = field(default_factory=list)  # phase order, e.g. "3:policy"

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "evaluations": self.evaluations,
            "best_index": self.best_index,
            "best_policy": self.best_policy.tolist(),
            "policies": self.policies.positions.tolist(),
            "failures": self.failures.positions.tolist(),
            "failure_costs": self.failure_costs.tolist(),
            "history": self.history,
            "events": self.events,
        }


@dataclass
class FailurePrediction:
    """Failure population sorted by descending cost against the frozen policy."""

    population: Population
    costs: np.ndarray
    policy: np.ndarray
    history: list
    config_hash: str
    seed: int
    evaluations: int

    def to_dict(self) -> dict:
        return {
            "method": "predict",
            "seed": self.seed,
            "config_hash": self.config_hash,
            "evaluations": self.evaluations,
            "policy": self.policy.tolist(),
            "failures": self.population.positions.tolist(),
            "failure_costs": self.costs.tolist(),
            "history": self.history,
        }


# ---------------------------------------------------------------------------
# chunked evaluation


class ChunkedTarget:
    """Evaluate a batched target in fixed-size row chunks, optionally on threads.

    Results depend on the chunk size but never on the number of threads.
    """

    batched = True

    def __init__(self, target: TemperedTarget, chunk: int, pool: ThreadPoolExecutor | None = None):
        self.target, self.chunk, self.pool = target, max(int(chunk), 1), pool

    def _map(self, fn, x):
        parts = [x[i:i + self.chunk] for i in range(0, len(x), self.chunk)]
        return list(self.pool.map(fn, parts)) if self.pool and len(parts) > 1 else [fn(p) for p in parts]

    def __call__(self, x):
        out = self._map(self.target, x)
        return np.concatenate([o[0] for o in out]), np.concatenate([o[1] for o in out])

    def values(self, x):
        return np.concatenate(self._map(self.target.values, x))


def _chain_rngs(seed: int, label: str, n: int) -> list[RngStream]:
    return [RngStream(seed, stream_id(label, c)) for c in range(n)]


def _init_population(env, role, n, seed) -> np.ndarray:
    rngs = _chain_rngs(seed, f"init-{role}", n)
    sample = env.sample_theta if role == POLICY else env.sample_phi
    return np.stack([sample(r) for r in rngs])


# ---------------------------------------------------------------------------
# quenching


def drift_step(batch: ChainBatch, target, eps: float) -> ChainBatch:
    """Noise-free gradient step, kept only where the log-density does not drop."""
    proposal = batch.position + eps * batch.grad_logp
    with np.errstate(invalid="ignore", over="ignore"):
        lp, g = evaluate(target, proposal, True)
    ok = np.isfinite(lp) & np.all(np.isfinite(g), axis=1) & (lp >= batch.logp)
    return ChainBatch(np.where(ok[:, None], proposal, batch.position), np.where(ok, lp, batch.logp),
                      np.where(ok[:, None], g, batch.grad_logp), batch.accepted + ok, batch.proposed + 1)


def quench_policies(batch: ChainBatch, target, steps: int, eps: float, method: str,
                    quench_round: int, rngs) -> ChainBatch:
    """One quenching round for the policy chains.

    MALA: ``steps`` deterministic drift steps with monotone acceptance.
    RMH: ordinary RMH steps with the step size halved once per quench round.
    """
    if method == "mala":
        for _ in range(steps):
            batch = drift_step(batch, target, eps)
        return batch
    return run_chains(batch, target, steps, eps * 0.5 ** (quench_round + 1), rngs, "rmh")


def quench(policies: Population, failures: Population, config: ExperimentConfig, env, *,
           rngs_theta=None, rngs_phi=None, wrap=None, log=None, events=None):
    """Run ``config.quench_rounds`` rounds at the final temperature ``policies.tau``.

    Policy chains lose their proposal noise (see :func:`quench_policies`);
    failure chains keep sampling. Returns the updated populations.
    """
    wrap = wrap or (lambda t: t)
    rngs_theta = rngs_theta or _chain_rngs(config.seed, "quench-policy", len(policies))
    rngs_phi = rngs_phi or _chain_rngs(config.seed, "quench-failure", len(failures))
    tau = policies.tau
    pol, fail = policies.chains, failures.chains
    gradient = config.sampler == "mala"
    for q in range(config.quench_rounds):
        rt = wrap(TemperedTarget(REPAIR, tau, config.failure_threshold, fail.position, env))
        pol = reset_counts(with_target(pol, rt, gradient))
        pol = quench_policies(pol, rt, config.steps_per_round, config.step_size_theta,
                              config.sampler, q, rngs_theta)
        if events is not None:
            events.append(f"{policies.round + q + 1}:{POLICY}")
        ft = wrap(TemperedTarget(FAILURE, tau, config.failure_threshold, pol.position, env))
        fail = reset_counts(with_target(fail, ft, gradient))
        fail = run_chains(fail, ft, config.steps_per_round, config.step_size_phi, rngs_phi, config.sampler)
        if events is not None:
            events.append(f"{policies.round + q + 1}:{ENVIRONMENT}")
        if log is not None:
            log(policies.round + q + 1, "quench", tau, pol, fail)
    r = policies.round + config.quench_rounds
    return Population(pol, POLICY, r, tau), Population(fail, ENVIRONMENT, r, tau)


# ---------------------------------------------------------------------------
# main loop


class _History:
    def __init__(self, env, threshold):
        self.env, self.threshold = env, threshold
        self.rounds: list[dict] = []
        self.events: list[str] = []

    def log(self, i, phase, tau, pol, fail):
        costs = np.asarray(self.env.cost(pol.position[:, None, :], fail.position[None, :, :]), dtype=float)
        self.rounds.append({
            "round": int(i), "phase": phase, "tau": float(tau),
            "mean_cost": float(costs.mean()),
            "failure_fraction": float((costs >= self.threshold).mean()),
            "policy_acceptance": _rate(pol), "failure_acceptance": _rate(fail),
            "policy_mean_logp": float(np.mean(pol.logp)), "failure_mean_logp": float(np.mean(fail.logp)),
        })


def _rate(batch: ChainBatch) -> float:
    p = batch.proposed.sum()
    return float(batch.accepted.sum() / p) if p else 0.0


def _write_partial(out_dir, history: _History, cfg_hash, seed):
    if out_dir is None:
        return
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    doc = {"status": "aborted", "config_hash": cfg_hash, "seed": seed,
           "history": history.rounds, "events": history.events}
    (path / "partial_history.json").write_text(json.dumps(doc, indent=2, sort_keys=True))


def radium_run(config: ExperimentConfig, env: Environment, *, rounds: int | None = None,
               threads: int = 1, chunk: int | None = None, out_dir=None) -> RepairResult:
    """Interleaved repair/failure sampling followed by quenching.

    Each round policy chains take ``K`` steps on the repair target built from
    the current failures, then failure chains take ``K`` steps on the failure
    target averaged over the current policies. Chains are warm-started from
    their previous positions. ``rounds`` overrides ``config.rounds`` (0 skips
    the loop). On error the history so far is written to ``out_dir``.
    """
    N = config.rounds if rounds is None else int(rounds)
    if N < 0:
        raise ValueError("rounds must be >= 0")
    counted = CountingEnv(env)
    n = config.population
    chunk = n if chunk is None else chunk
    cfg_hash = config_hash(config)
    history = _History(env, config.failure_threshold)
    gradient = config.sampler == "mala"
    rngs_theta = _chain_rngs(config.seed, "policy", n)
    rngs_phi = _chain_rngs(config.seed, "failure", n)
    theta = _init_population(env, POLICY, n, config.seed)
    phi = _init_population(env, ENVIRONMENT, n, config.seed)
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    wrap = lambda t: ChunkedTarget(t, chunk, pool)  # noqa: E731
    try:
        tau = 0.0
        rt = wrap(TemperedTarget(REPAIR, tau, config.failure_threshold, phi, counted))
        pol = ChainBatch.start(theta, rt, gradient)
        ft = wrap(TemperedTarget(FAILURE, tau, config.failure_threshold, theta, counted))
        fail = ChainBatch.start(phi, ft, gradient)
        for i in range(1, N + 1):
            tau = tempering_tau(i, N, config.tempering_rate)
            rt = wrap(TemperedTarget(REPAIR, tau, config.failure_threshold, fail.position, counted))
            pol = reset_counts(with_target(pol, rt, gradient))
            pol = run_chains(pol, rt, config.steps_per_round, config.step_size_theta, rngs_theta, config.sampler)
            history.events.append(f"{i}:{POLICY}")
            ft = wrap(TemperedTarget(FAILURE, tau, config.failure_threshold, pol.position, counted))
            fail = reset_counts(with_target(fail, ft, gradient))
            fail = run_chains(fail, ft, config.steps_per_round, config.step_size_phi, rngs_phi, config.sampler)
            history.events.append(f"{i}:{ENVIRONMENT}")
            history.log(i, "tempered", tau, pol, fail)
        policies = Population(pol, POLICY, N, tau)
        failures = Population(fail, ENVIRONMENT, N, tau)
        policies, failures = quench(policies, failures, config, counted, rngs_theta=rngs_theta,
                                    rngs_phi=rngs_phi, wrap=wrap, log=history.log,
                                    events=history.events)
        # final selection against the final failures at the final temperature
        rt = TemperedTarget(REPAIR, failures.tau, config.failure_threshold, failures.positions, counted)
        lp = wrap(rt).values(policies.positions)
        best = int(np.argmax(lp))
        theta_star = policies.positions[best].copy()
        fcost = np.asarray(env.cost(theta_star[None], failures.positions), dtype=float)
    except Exception:
        _write_partial(out_dir, history, cfg_hash, config.seed)
        raise
    finally:
        if pool:
            pool.shutdown()
    return RepairResult(theta_star, best, policies, failures, fcost,
                        history.rounds, cfg_hash, config.seed, counted.evaluations,
                        f"radium-{config.sampler}", history.events)


def predict_failures(theta_fixed, config: ExperimentConfig, env: Environment, *,
                     threads: int = 1, chunk: int | None = None, out_dir=None) -> FailurePrediction:
    """Tempered failure sampling against a frozen policy (no repair half).

    ``config.quench_rounds`` extra rounds continue sampling at the final
    temperature. The population is returned sorted by descending cost.
    """
    theta_fixed = np.asarray(theta_fixed, dtype=float).reshape(1, -1)
    if theta_fixed.shape[1] != env.dim_theta:
        raise ValueError(f"policy has {theta_fixed.shape[1]} entries, expected {env.dim_theta}")
    counted = CountingEnv(env)
    n = config.population
    chunk = n if chunk is None else chunk
    cfg_hash = config_hash(config)
    gradient = config.sampler == "mala"
    rngs = _chain_rngs(config.seed, "failure", n)
    phi = _init_population(env, ENVIRONMENT, n, config.seed)
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    history: list[dict] = []
    try:
        ft = ChunkedTarget(TemperedTarget(FAILURE, 0.0, config.failure_threshold, theta_fixed, counted), chunk, pool)
        fail = ChainBatch.start(phi, ft, gradient)
        total = config.rounds + config.quench_rounds
        tau = 0.0
        for i in range(1, total + 1):
            tau = tempering_tau(min(i, config.rounds), config.rounds, config.tempering_rate)
            ft = ChunkedTarget(TemperedTarget(FAILURE, tau, config.failure_threshold, theta_fixed, counted),
                               chunk, pool)
            fail = reset_counts(with_target(fail, ft, gradient))
            fail = run_chains(fail, ft, config.steps_per_round, config.step_size_phi, rngs, config.sampler)
            costs = np.asarray(env.cost(theta_fixed, fail.position), dtype=float)
            history.append({"round": i, "phase": "tempered" if i <= config.rounds else "quench",
                            "tau": float(tau), "mean_cost": float(costs.mean()),
                            "failure_fraction": float((costs >= config.failure_threshold).mean()),
                            "failure_acceptance": _rate(fail),
                            "failure_mean_logp": float(np.mean(fail.logp))})
    except Exception:
        if out_dir is not None:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            (Path(out_dir) / "partial_history.json").write_text(
                json.dumps({"status": "aborted", "config_hash": cfg_hash, "seed": config.seed,
                            "history": history}, indent=2, sort_keys=True))
        raise
    finally:
        if pool:
            pool.shutdown()
    costs = np.asarray(env.cost(theta_fixed, fail.position), dtype=float)
    order = np.argsort(-costs, kind="stable")
    chains = ChainBatch(fail.position[order], fail.logp[order], fail.grad_logp[order],
                        fail.accepted[order], fail.proposed[order])
    return FailurePrediction(Population(chains, ENVIRONMENT, total, tau), costs[order],
                             theta_fixed[0].copy(), history, cfg_hash, config.seed, counted.evaluations)


def radium_budget(config: ExperimentConfig, rounds: int | None = None) -> int:
    """Individual cost evaluations used by :func:`radium_run` for ``config``.

    Every target evaluation of a chain costs ``n`` cost evaluations because
    the likelihood averages over the opposing population; targets at
    ``tau = 0`` are prior-only and cost nothing.
    """
    N = config.rounds if rounds is None else rounds
    if N == 0:
        return 0
    n, K = config.population, config.steps_per_round
    per_round = 2 * (n + K * n) * n  # re-evaluation after the target changes, then K steps
    return (N + config.quench_rounds) * per_round + n * n


__all__ = [
    "ENVIRONMENT", "POLICY", "ChunkedTarget", "FailurePrediction", "Population", "RepairResult",
    "drift_step", "predict_failures", "quench", "quench_policies", "radium_budget", "radium_run",
]

