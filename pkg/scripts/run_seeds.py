"""Run RADIUM (both samplers) and the baselines over several seeds and write
one metrics.json per (method, seed) under --out.

    python3 scripts/run_seeds.py --config configs/search_3v5.yaml --seeds 0 1 2 3 --out runs/search
"""

import argparse
from pathlib import Path

import yaml

from radium.baselines import BaselineConfig, run_baseline
from radium.core import config_from_dict, config_hash
from radium.envs import make_env
from radium.harness import evaluate, io
from radium.radium import radium_budget, radium_run

METHODS = ("mala", "rmh", "gdr", "gda", "l2c")


def run_one(doc, seed, method, test_size, test_seed):
    cfg = config_from_dict({**doc, "seed": seed, "sampler": method if method in ("mala", "rmh") else "mala"})
    params = {**cfg.env_params}
    if "theta0_seed" in make_env(cfg.env_name).params:
        params.setdefault("theta0_seed", seed)
    env = make_env(cfg.env_name, params)
    if method in ("mala", "rmh"):
        theta = radium_run(cfg, env).best_policy
    else:
        bcfg = BaselineConfig.from_dict({"budget": radium_budget(cfg), **cfg.baseline, "method": method, "seed": seed})
        theta = run_baseline(env.theta0, env, bcfg).theta
    label = {"mala": "R1", "rmh": "R0"}.get(method, method)
    return evaluate(theta, env, test_size, test_seed, cfg.failure_threshold,
                    config_hash=config_hash(cfg), method=label)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3])
    p.add_argument("--methods", nargs="+", choices=METHODS, default=list(METHODS))
    p.add_argument("--test-size", type=int, default=1000)
    p.add_argument("--test-seed", type=int, default=1234)
    p.add_argument("--out", required=True)
    args = p.parse_args(argv)
    doc = yaml.safe_load(Path(args.config).read_text())
    for seed in args.seeds:
        for method in args.methods:
            rep = run_one(doc, seed, method, args.test_size, args.test_seed)
            io.write_json(Path(args.out) / method / f"seed{seed}" / "metrics.json", rep.to_dict(), "metrics")
            print(f"seed {seed} {rep.method:>4}: FR {rep.failure_rate:.3f} mean {rep.mean_cost:.4f}", flush=True)


if __name__ == "__main__":
    main()
