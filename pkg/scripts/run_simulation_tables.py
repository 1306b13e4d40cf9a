#!/usr/bin/env python3
"""Reproduce the simulation result tables at a chosen scale.

Runs every (design, N, T, nu_alpha) block with the full estimator set
and the standard gamma grid, writing one CSV per block. At --reps 1000
this is the full-size exercise; --reps 200 matches the acceptance scale.

    python scripts/run_simulation_tables.py --out-dir results --reps 200
    python scripts/run_simulation_tables.py --design dynamic --reps 1000 --jobs 8
"""

import argparse
import os
import time

from gfepanel import SimDesign, report_to_csv, run_study

BLOCKS = {
    "static": [
        dict(nu_alpha=2.0), dict(nu_alpha=1.0),
    ],
    "dynamic": [
        dict(nu_alpha=-1.0), dict(nu_alpha=0.0),
    ],
    "trending": [
        dict(nu_alpha=-1.0),
    ],
}
SIZES = [(100, 8), (200, 8), (100, 16), (200, 16)]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--design", choices=["static", "dynamic", "trending", "all"],
                        default="all")
    parser.add_argument("--reps", type=int, default=200)
    parser.add_argument("--jobs", type=int, default=os.cpu_count())
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--sizes", default="100x8",
                        help="comma list of NxT blocks, or 'all'")
    parser.add_argument("--out-dir", default="results")
    args = parser.parse_args()

    kinds = list(BLOCKS) if args.design == "all" else [args.design]
    if args.sizes == "all":
        sizes = SIZES
    else:
        sizes = [tuple(int(v) for v in s.split("x")) for s in args.sizes.split(",")]
    os.makedirs(args.out_dir, exist_ok=True)

    for kind in kinds:
        estimators = ("infeasible", "ml", "jackknife", "gfe")
        if kind == "static":
            estimators = ("infeasible", "ml", "jackknife", "firth", "gfe")
        for variant in BLOCKS[kind]:
            for n, t in sizes:
                design = SimDesign(
                    kind=kind, n=n, t=t, reps=args.reps, seed=args.seed,
                    estimators=estimators, **variant,
                )
                tag = f"{kind}_nu{variant['nu_alpha']:g}_n{n}_t{t}"
                start = time.time()
                report = run_study(design, jobs=args.jobs)
                path = os.path.join(args.out_dir, f"{tag}.csv")
                report_to_csv(report, path)
                print(f"{tag}: {time.time() - start:.0f}s -> {path}")


if __name__ == "__main__":
    main()
