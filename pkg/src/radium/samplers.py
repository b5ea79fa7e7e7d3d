"""Tempered pseudo-posteriors, MALA and random-walk Metropolis.

The step functions work on a batch of independent chains at once: row ``c``
of every array belongs to chain ``c`` and consumes randomness only from
``rngs[c]``, so a chain's trajectory does not depend on which other chains
share the batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import grad as ad
from .core import RngStream

FAILURE = "failure"
REPAIR = "repair"


class NonFiniteGradient(FloatingPointError):
    pass


def tempering_tau(i: int, rounds: int, rate: float) -> float:
    """Tempering schedule ``1 - exp(-rate * i / rounds)``."""
    if rounds <= 0 or rate <= 0 or not 0 <= i <= rounds:
        raise ValueError("need 0 <= i <= rounds, rounds > 0 and rate > 0")
    return -math.expm1(-rate * i / rounds)


# ---------------------------------------------------------------------------
# targets

@dataclass(frozen=True)
class TemperedTarget:
    """Tempered failure or repair pseudo-posterior.

    ``opposing`` holds the other population: policies for a failure target,
    environment parameters for a repair target. The likelihood term is the
    population average of the ELU hinge.
    """

    kind: str
    tau: float
    threshold: float
    opposing: np.ndarray
    env: object
    batched = True  # class attribute: evaluates (b, dim) arrays directly

    def __post_init__(self):
        if self.kind not in (FAILURE, REPAIR):
            raise ValueError(f"kind must be {FAILURE!r} or {REPAIR!r}")
        opp = np.atleast_2d(np.asarray(self.opposing, dtype=float))
        if opp.shape[0] == 0:
            raise ValueError("opposing population is empty")
        object.__setattr__(self, "opposing", opp)

    @property
    def dim(self) -> int:
        return self.env.dim_phi if self.kind == FAILURE else self.env.dim_theta

    def log_prior(self, x):
        return self.env.log_prior_phi(x) if self.kind == FAILURE else self.env.log_prior_theta(x)

    def hinge(self, x):
        """Population-averaged ELU hinge for a batch ``x`` of shape (b, dim)."""
        opp = self.opposing
        if self.kind == FAILURE:
            costs = self.env.cost(opp[None, :, :], ad.reshape(x, (-1, 1, self.dim)))
            h = ad.elu(self.threshold - costs)
        else:
            costs = self.env.cost(ad.reshape(x, (-1, 1, self.dim)), opp[None, :, :])
            h = ad.elu(costs - self.threshold)
        return ad.mean(h, axis=1)

    def logprob(self, x):
        """Log-density (up to a constant) for a batch ``x`` of shape (b, dim)."""
        lp = self.log_prior(x)
        if self.tau == 0.0:
            return lp
        return lp - self.tau * self.hinge(x)

    def values(self, x):
        """Batched log-density without gradient."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.asarray(self.logprob(x), dtype=float).reshape(-1)

    def __call__(self, x):
        """Batched log-density and gradient: returns arrays of shape (b,), (b, dim)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dim:
            raise ValueError(f"expected dimension {self.dim}, got {x.shape[1]}")
        tape = ad.Tape()
        xv = tape.var(x)
        lp = self.logprob(xv)
        (g,) = ad.backward(tape, ad.sum(lp), [xv])
        return np.asarray(ad.value(lp), dtype=float).reshape(-1), g


def failure_logprob(phi, target: TemperedTarget, with_grad: bool = False):
    if target.kind != FAILURE:
        raise ValueError("failure_logprob needs a failure target")
    return _single(phi, target, with_grad)


def repair_logprob(theta, target: TemperedTarget, with_grad: bool = False):
    if target.kind != REPAIR:
        raise ValueError("repair_logprob needs a repair target")
    return _single(theta, target, with_grad)


def _single(x, target, with_grad):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != target.dim:
        raise ValueError(f"expected a vector of length {target.dim}, got shape {x.shape}")
    if with_grad:
        lp, g = target(x[None])
        return float(lp[0]), g[0]
    return float(np.asarray(target.logprob(x[None])).reshape(()))


# ---------------------------------------------------------------------------
# chain state and steps

@dataclass(frozen=True)
class ChainState:
    position: np.ndarray
    logp: float
    grad_logp: np.ndarray
    accepted: int = 0
    proposed: int = 0

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else 0.0


@dataclass
class ChainBatch:
    """Struct-of-arrays view of ``n`` chains of dimension ``d``."""

    position: np.ndarray  # (n, d)
    logp: np.ndarray  # (n,)
    grad_logp: np.ndarray  # (n, d)
    accepted: np.ndarray = field(default=None)
    proposed: np.ndarray = field(default=None)

    def __post_init__(self):
        n = self.position.shape[0]
        if self.accepted is None:
            self.accepted = np.zeros(n, dtype=np.int64)
        if self.proposed is None:
            self.proposed = np.zeros(n, dtype=np.int64)

    @classmethod
    def start(cls, positions, target: Callable, gradient: bool = True) -> "ChainBatch":
        pos = np.array(positions, dtype=float)
        lp, g = evaluate(target, pos, gradient)
        return cls(pos, lp, g)

    @classmethod
    def from_states(cls, states: Sequence[ChainState]) -> "ChainBatch":
        return cls(np.stack([s.position for s in states]), np.array([s.logp for s in states]),
                   np.stack([s.grad_logp for s in states]),
                   np.array([s.accepted for s in states], dtype=np.int64),
                   np.array([s.proposed for s in states], dtype=np.int64))

    def states(self) -> list[ChainState]:
        return [ChainState(self.position[c].copy(), float(self.logp[c]), self.grad_logp[c].copy(),
                           int(self.accepted[c]), int(self.proposed[c]))
                for c in range(len(self))]

    def copy(self) -> "ChainBatch":
        return ChainBatch(self.position.copy(), self.logp.copy(), self.grad_logp.copy(),
                          self.accepted.copy(), self.proposed.copy())

    def __len__(self):
        return self.position.shape[0]


def _gaussian_log_q(to, frm, drift, eps):
    diff = to - frm - drift
    return -np.sum(diff * diff, axis=-1) / (4.0 * eps)


def log_acceptance(x, lp_x, g_x, y, lp_y, g_y, eps, use_gradient: bool = True):
    """Log Metropolis-Hastings ratio for moving ``x -> y``.

    With gradients this includes the Langevin proposal correction
    ``log q(x | y) - log q(y | x)``; without, the proposal is symmetric.
    """
    log_ratio = lp_y - lp_x
    if use_gradient:
        e = np.asarray(eps, dtype=float)
        ec = e[..., None] if e.ndim else e
        log_ratio = log_ratio + _gaussian_log_q(x, y, ec * g_y, e) - _gaussian_log_q(y, x, ec * g_x, e)
    return log_ratio


def langevin_step(batch: ChainBatch, target: Callable, eps, rngs: Sequence[RngStream],
                  use_gradient: bool = True) -> ChainBatch:
    """One MALA step per chain (random-walk Metropolis if ``use_gradient`` is False).

    Proposal ``x + eps * grad log p(x) + eta`` with ``eta ~ N(0, 2 eps I)``.
    Proposals with NaN or -inf density are rejected rather than raised.
    """
    n, d = batch.position.shape
    eps_arr = np.broadcast_to(np.asarray(eps, dtype=float), (n,))
    if np.any(eps_arr <= 0):
        raise ValueError("step size must be positive")
    if use_gradient and not np.all(np.isfinite(batch.grad_logp)):
        raise NonFiniteGradient("gradient at the current state is not finite")
    noise = np.stack([r.normal(d) for r in rngs])
    u = np.array([r.uniform() for r in rngs])
    x = batch.position
    e = eps_arr[:, None]
    if use_gradient:
        drift = e * batch.grad_logp
        proposal = x + drift + np.sqrt(2.0 * e) * noise
    else:
        proposal = x + np.sqrt(2.0 * e) * noise
    with np.errstate(invalid="ignore", over="ignore"):
        lp_new, g_new = evaluate(target, proposal, use_gradient)
    log_ratio = log_acceptance(x, batch.logp, batch.grad_logp, proposal, lp_new, g_new, eps_arr, use_gradient)
    ok = np.isfinite(lp_new) & np.isfinite(log_ratio)
    if use_gradient:
        ok &= np.all(np.isfinite(g_new), axis=1)
    with np.errstate(divide="ignore"):
        accept = ok & (np.log(u) < np.where(ok, log_ratio, -np.inf))
    out = ChainBatch(np.where(accept[:, None], proposal, x),
                     np.where(accept, lp_new, batch.logp),
                     np.where(accept[:, None], g_new, batch.grad_logp),
                     batch.accepted + accept, batch.proposed + 1)
    return out


def evaluate(target, x, gradient: bool = True):
    """Batched ``(logp, grad)``; grad is zeros when ``gradient`` is False.

    Failures inside the target surface as NaN so the step rejects them.
    """
    try:
        if not gradient and hasattr(target, "values"):
            lp, g = target.values(x), np.zeros_like(x)
        else:
            lp, g = target(x)
            if not gradient:
                g = np.zeros_like(x)
    except (FloatingPointError, ad.NaNGradient, ValueError):
        lp = np.full(x.shape[0], np.nan)
        g = np.full_like(x, np.nan)
    return np.asarray(lp, dtype=float).reshape(-1), np.asarray(g, dtype=float)


def _as_batch_target(target: Callable) -> Callable:
    """Lift a single-point target ``x -> (logp, grad)`` to batches unless it
    declares ``batched = True``."""
    if getattr(target, "batched", False):
        return target

    def batched(x):
        out = [target(row) for row in x]
        return (np.array([float(o[0]) for o in out]),
                np.stack([np.broadcast_to(np.asarray(o[1], dtype=float), row.shape)
                          for o, row in zip(out, x)]))

    return batched


def mala_step(state: ChainState, target: Callable, eps: float, rng: RngStream) -> ChainState:
    batch = ChainBatch.from_states([state])
    return langevin_step(batch, _as_batch_target(target), eps, [rng], True).states()[0]


def rmh_step(state: ChainState, target: Callable, eps: float, rng: RngStream) -> ChainState:
    batch = ChainBatch.from_states([state])
    return langevin_step(batch, _as_batch_target(target), eps, [rng], False).states()[0]


def initial_state(x, target: Callable, method: str = "mala") -> ChainState:
    x = np.asarray(x, dtype=float)
    lp, g = evaluate(_as_batch_target(target), x[None], method == "mala")
    return ChainState(x.copy(), float(lp[0]), g[0])


def run_chains(batch: ChainBatch, target: Callable, steps: int, eps, rngs, method: str,
               trace: list | None = None) -> ChainBatch:
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if method not in ("mala", "rmh"):
        raise ValueError(f"unknown method {method!r}")
    target = _as_batch_target(target)
    for _ in range(steps):
        batch = langevin_step(batch, target, eps, rngs, method == "mala")
        if trace is not None:
            trace.append(batch.position.copy())
    return batch


def run_chain(init, target: Callable, steps: int, eps: float, rng: RngStream,
              method: str = "mala", trace: list | None = None) -> ChainState:
    """Run ``steps`` MCMC steps from ``init`` (a vector or a :class:`ChainState`)."""
    state = init if isinstance(init, ChainState) else initial_state(init, target, method)
    batch = ChainBatch.from_states([state])
    rows: list | None = [] if trace is not None else None
    out = run_chains(batch, target, steps, eps, [rng], method, rows)
    if trace is not None:
        trace.extend(r[0] for r in rows)
    return out.states()[0]


def with_target(batch: ChainBatch, target: Callable, gradient: bool = True) -> ChainBatch:
    """Re-evaluate cached densities after the target changed (e.g. new tau)."""
    lp, g = evaluate(_as_batch_target(target), batch.position, gradient)
    return ChainBatch(batch.position.copy(), lp, g,
                      batch.accepted.copy(), batch.proposed.copy())


def reset_counts(batch: ChainBatch) -> ChainBatch:
    return replace(batch, accepted=np.zeros_like(batch.accepted),
                   proposed=np.zeros_like(batch.proposed))
