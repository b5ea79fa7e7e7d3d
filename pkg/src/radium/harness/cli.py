"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import yaml

from ..baselines import METHODS, BaselineConfig, run_baseline
from ..core import SAMPLERS, ConfigError, config_from_dict, config_hash
from ..envs import ENVIRONMENTS, make_env
from ..radium import predict_failures, radium_budget, radium_run
from . import io
from .gibbs import gibbs_toy
from .gradcheck import env_gradcheck
from .metrics import evaluate


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _global_flags(p, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(None), help="overrides the config seed")
    p.add_argument("--sampler", choices=SAMPLERS, default=d(None), help="overrides the config sampler")
    p.add_argument("--threads", type=int, default=d(1), help="worker threads (results do not depend on it)")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="radium", description="Failure prediction and repair with tempered MCMC.")
    _global_flags(p, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_):
        return sub.add_parser(name, help=help_, parents=[common])

    s = add("predict", "sample failures of a fixed policy")
    s.add_argument("--env", choices=ENVIRONMENTS, required=True)
    s.add_argument("--config", help="YAML experiment config (defaults to the env preset)")
    s.add_argument("--policy", help="JSON policy vector (defaults to the prior mean)")
    s.add_argument("--out", required=True)

    s = add("repair", "run interleaved failure prediction and repair")
    s.add_argument("--env", choices=ENVIRONMENTS, required=True)
    s.add_argument("--config")
    s.add_argument("--out", required=True)

    s = add("eval", "test-set metrics of a policy")
    s.add_argument("--env", choices=ENVIRONMENTS, required=True)
    s.add_argument("--config")
    s.add_argument("--policy")
    s.add_argument("--size", type=int, default=1000)
    s.add_argument("--out", required=True)

    s = add("baseline", "run a comparison method at RADIUM's evaluation budget")
    s.add_argument("--method", choices=METHODS, required=True)
    s.add_argument("--env", choices=ENVIRONMENTS, required=True)
    s.add_argument("--config")
    s.add_argument("--out", required=True)

    s = add("toy-gibbs", "Gibbs sampler on a cost table against the enumerated marginal")
    s.add_argument("--table", required=True,
                   help='JSON: a matrix, or {"table": ..., "threshold": ..., "prior_theta": ..., "prior_phi": ...}')
    s.add_argument("--threshold", type=float)
    s.add_argument("--rounds", type=int, default=100_000)
    s.add_argument("--out", required=True)

    s = add("gradcheck", "finite-difference check of the cost gradient")
    s.add_argument("--env", choices=ENVIRONMENTS, required=True)
    s.add_argument("--samples", type=int, default=20)
    s.add_argument("--step", type=float, help="finite-difference step (defaults per environment)")
    s.add_argument("--tol", type=float, default=1e-4)
    s.add_argument("--out")
    return p


# ---------------------------------------------------------------------------


def _config(args):
    doc = {}
    if args.config:
        doc = yaml.safe_load(Path(args.config).read_text()) or {}
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a key/value table")
    if "env_name" in doc and doc["env_name"] != args.env:
        raise UsageError(f"--env {args.env} disagrees with env_name {doc['env_name']!r} in --config")
    doc["env_name"] = args.env
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.sampler is not None:
        doc["sampler"] = args.sampler
    return config_from_dict(doc)


def _policy(path, env):
    if path is None:
        return env.theta0.copy()
    doc = io.read_json(path)
    if isinstance(doc, dict):
        for key in ("best_policy", "policy", "theta"):
            if key in doc:
                doc = doc[key]
                break
        else:
            raise ValueError(f"{path}: no best_policy/policy/theta entry")
    theta = np.asarray(doc, dtype=float).reshape(-1)
    if theta.shape[0] != env.dim_theta:
        raise ValueError(f"{path}: policy has {theta.shape[0]} entries, expected {env.dim_theta}")
    return theta


def _cmd_predict(args):
    cfg = _config(args)
    env = make_env(cfg.env_name, cfg.env_params)
    out = Path(args.out)
    pred = predict_failures(_policy(args.policy, env), cfg, env, threads=args.threads, out_dir=out)
    doc = pred.to_dict() | {"config": cfg.to_dict()}
    io.write_json(out / "prediction.json", doc, "prediction")
    io.write_history_csv(out / "history.csv", pred.history)
    io.write_matrix_csv(out / "failures.csv", pred.population.positions, "phi")
    return 0


def _cmd_repair(args):
    cfg = _config(args)
    env = make_env(cfg.env_name, cfg.env_params)
    out = Path(args.out)
    res = radium_run(cfg, env, threads=args.threads, out_dir=out)
    io.write_json(out / "result.json", res.to_dict() | {"config": cfg.to_dict()}, "result")
    io.write_history_csv(out / "history.csv", res.history)
    io.write_matrix_csv(out / "policies.csv", res.policies.positions, "theta")
    io.write_matrix_csv(out / "failures.csv", res.failures.positions, "phi")
    if hasattr(env, "rollout"):
        worst = int(np.argmax(res.failure_costs))
        env.rollout(res.best_policy, res.failures.positions[worst]).to_csv(out / "rollout.csv")
    return 0


def _cmd_eval(args):
    cfg = _config(args)
    env = make_env(cfg.env_name, cfg.env_params)
    rep = evaluate(_policy(args.policy, env), env, args.size, cfg.seed, cfg.failure_threshold,
                   config_hash=config_hash(cfg), method="eval")
    out = Path(args.out)
    io.write_json(out / "metrics.json", rep.to_dict(), "metrics")
    io.write_rows(out / "costs.csv", [{"index": i, "cost": float(c)} for i, c in enumerate(rep.per_sample_costs)])
    return 0


def _cmd_baseline(args):
    cfg = _config(args)
    env = make_env(cfg.env_name, cfg.env_params)
    bdoc = {"budget": radium_budget(cfg), **cfg.baseline, "method": args.method, "seed": cfg.seed}
    bcfg = BaselineConfig.from_dict(bdoc)
    res = run_baseline(env.theta0, env, bcfg)
    res.config_hash = config_hash(cfg)
    out = Path(args.out)
    io.write_json(out / "result.json", res.to_dict() | {"config": cfg.to_dict(), "baseline": bcfg.to_dict()},
                  "result")
    io.write_history_csv(out / "history.csv", res.history)
    io.write_matrix_csv(out / "failures.csv", res.phis, "phi")
    return 0


def _cmd_toy_gibbs(args):
    doc = io.read_json(args.table)
    if isinstance(doc, list):
        doc = {"table": doc}
    threshold = args.threshold if args.threshold is not None else doc.get("threshold")
    if threshold is None:
        raise UsageError("a threshold is required (--threshold or a 'threshold' entry in --table)")
    seed = 0 if args.seed is None else args.seed
    res = gibbs_toy(doc["table"], threshold, args.rounds, seed, doc.get("prior_theta"), doc.get("prior_phi"))
    out = Path(args.out)
    io.write_json(out / "gibbs.json", res.to_dict() | {"threshold": float(threshold), "table": doc["table"]},
                  "gibbs")
    rows = [{"theta": i, "empirical": float(a), "enumerated": float(b), "stationary": float(c)}
            for i, (a, b, c) in enumerate(zip(res.empirical, res.enumerated, res.stationary))]
    io.write_rows(out / "marginals.csv", rows)
    print(f"tv={res.tv:.6f} tv_stationary={res.tv_stationary:.6f}")
    return 0


def _cmd_gradcheck(args):
    env = make_env(args.env)
    seed = 0 if args.seed is None else args.seed
    step = env.gradcheck_step if args.step is None else args.step
    errors = env_gradcheck(env, args.samples, seed, step)
    doc = {"env": args.env, "seed": seed, "step": step, "errors": errors.tolist(),
           "max_error": float(errors.max())}
    if args.out:
        io.write_json(Path(args.out) / "gradcheck.json", doc, "gradcheck")
    ok = doc["max_error"] < args.tol
    print(f"{args.env}: max relative error {doc['max_error']:.3e} over {args.samples} samples "
          f"({'ok' if ok else 'above tolerance'})")
    return 0 if ok else 2


COMMANDS = {"predict": _cmd_predict, "repair": _cmd_repair, "eval": _cmd_eval, "baseline": _cmd_baseline,
            "toy-gibbs": _cmd_toy_gibbs, "gradcheck": _cmd_gradcheck}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.threads < 1:
            parser.error("argument --threads: must be >= 1")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure: report and exit 2
        print(f"radium: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
