"""Mean and standard deviation of test metrics across seeds.

Reads every metrics.json under the given directories, groups by method,
optionally normalizes costs by the largest per-sample cost within each seed
(so different methods share one scale), and prints a table.
"""

import argparse
import re
from collections import defaultdict
from pathlib import Path

import numpy as np

from radium.harness import MetricsReport, NonPositiveMax, normalize_costs
from radium.harness import io

STATS = ("failure_rate", "mean_cost", "p99_cost", "max_cost")


def load(paths):
    out = []
    for root in paths:
        for f in sorted(Path(root).rglob("metrics.json")):
            d = io.read_json(f)
            m = re.search(r"seed(\d+)", str(f))
            rep = MetricsReport.from_costs(d["per_sample_costs"], d["threshold"], d["test_seed"],
                                           method=d["method"] or f.parent.parent.name)
            out.append((int(m.group(1)) if m else 0, rep))
    return out


def normalize_per_seed(rows):
    by_seed = defaultdict(list)
    for seed, rep in rows:
        by_seed[seed].append(rep)
    out = []
    for seed, reps in sorted(by_seed.items()):
        try:
            reps, _ = normalize_costs(reps)
        except NonPositiveMax:
            pass  # keep raw costs
        out += [(seed, r) for r in reps]
    return out


def summarize(rows):
    table = defaultdict(lambda: defaultdict(list))
    for _, rep in rows:
        for s in STATS:
            table[rep.method][s].append(getattr(rep, s))
    return {m: {s: (float(np.mean(v)), float(np.std(v)), len(v)) for s, v in cols.items()}
            for m, cols in table.items()}


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("dirs", nargs="+")
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--csv")
    args = p.parse_args(argv)
    rows = load(args.dirs)
    if args.normalize:
        rows = normalize_per_seed(rows)
    summary = summarize(rows)
    print(f"{'method':>8} " + " ".join(f"{s:>22}" for s in STATS) + "  seeds")
    for m in sorted(summary):
        cells = [f"{mu:10.4f} ± {sd:<9.4f}" for mu, sd, _ in (summary[m][s] for s in STATS)]
        print(f"{m:>8} " + " ".join(cells) + f"  {summary[m]['mean_cost'][2]}")
    if args.csv:
        io.write_rows(args.csv, [{"method": m, **{f"{s}_{k}": v for s in STATS
                                                  for k, v in zip(("mean", "std"), summary[m][s][:2])}}
                                 for m in sorted(summary)])


if __name__ == "__main__":
    main()
