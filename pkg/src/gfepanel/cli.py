"""Command-line entry point: estimate / simulate / forecast subcommands.

Every run is reproducible from its flags: the resolved configuration is
recorded in the output headers, randomness flows from --seed, and
--no-timestamp makes reruns byte-identical.
"""

from __future__ import annotations

import argparse
import datetime
import json
import sys

from . import __version__
from .ape import half_panel_jackknife_ape, plug_in_ape
from .errors import PanelModelError
from .firth import fit_firth
from .forecast import expanding_window_forecast, predicted_density_export
from .gfe import estimate_gfe, rule_report
from .mle import ModelSpec, fit
from .panel import add_lagged_outcome, load_csv, restrict_periods
from .simulate import SimDesign, report_to_csv, run_study

_ESTIMATOR_ALIASES = {
    "ml": "ml", "j": "jackknife", "jackknife": "jackknife",
    "firth": "firth", "gfe": "gfe", "infeasible": "infeasible",
}


def _schema_flags(sub):
    sub.add_argument("--unit-col", default="unit")
    sub.add_argument("--time-col", default="time")
    sub.add_argument("--outcome-col", default="y")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="gfepanel",
        description="Grouped-fixed-effects regularized binary-choice panel estimation",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    est = subs.add_parser("estimate", help="fit one model on a CSV panel")
    est.add_argument("--input", required=True)
    est.add_argument("--mode", required=True, choices=["fe", "gfe", "pooled", "firth", "jackknife"])
    est.add_argument("--gamma", type=float, default=None)
    est.add_argument("--k", type=int, default=None)
    est.add_argument("--dynamic", action="store_true",
                     help="prepend the lagged outcome; the first period becomes the initial condition")
    est.add_argument("--link", default="logit", choices=["logit", "probit"])
    est.add_argument("--seed", type=int, default=0)
    est.add_argument("--kmeans-restarts", type=int, default=10)
    est.add_argument("--standardize", action="store_true",
                     help="rescale clustering moments by their cross-unit dispersion")
    est.add_argument("--binary-covariates", default="",
                     help="comma-separated covariates to treat as 0/1 finite differences")
    est.add_argument("--out", required=True, help="JSON summary path")
    est.add_argument("--ape-out", default=None, help="CSV of APE rows")
    est.add_argument("--no-timestamp", action="store_true")
    _schema_flags(est)

    sim = subs.add_parser("simulate", help="run a Monte Carlo study")
    sim.add_argument("--design", required=True, choices=["static", "dynamic", "trending"])
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--t", type=int, required=True)
    sim.add_argument("--nu-alpha", type=float, required=True)
    sim.add_argument("--reps", type=int, default=200)
    sim.add_argument("--gamma", default="0.1,0.4,0.7,1.0",
                     help="comma-separated gamma grid for the grouped estimator")
    sim.add_argument("--estimators", default="infeasible,ml,j,firth,gfe",
                     help="comma-separated subset of infeasible,ml,j,firth,gfe")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--kmeans-restarts", type=int, default=10)
    sim.add_argument("--jobs", type=int, default=1,
                     help="parallel replication workers (1 = serial)")
    sim.add_argument("--out", required=True)
    sim.add_argument("--no-timestamp", action="store_true")

    fc = subs.add_parser("forecast", help="expanding-window one-step-ahead forecasts")
    fc.add_argument("--input", required=True)
    fc.add_argument("--train-start", type=int, default=None)
    fc.add_argument("--train-ends", required=True,
                    help="either a..b (inclusive) or a comma-separated list of years")
    fc.add_argument("--method", required=True, choices=["ml", "firth", "gfe"])
    fc.add_argument("--gamma", type=float, default=None)
    fc.add_argument("--dynamic", action="store_true")
    fc.add_argument("--link", default="logit", choices=["logit", "probit"])
    fc.add_argument("--seed", type=int, default=0)
    fc.add_argument("--kmeans-restarts", type=int, default=10)
    fc.add_argument("--out", required=True)
    fc.add_argument("--density-out", default=None)
    fc.add_argument("--no-timestamp", action="store_true")
    _schema_flags(fc)
    return parser


def _config_header(args, skip=("out", "ape_out", "density_out", "no_timestamp", "command")):
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in skip and v is not None}
    if not args.no_timestamp:
        cfg["generated"] = datetime.datetime.now().isoformat(timespec="seconds")
    return cfg


def _ape_rows(fit_result, data, binary_names):
    rows = []
    for j, name in enumerate(data.covariate_names):
        discrete = (fit_result.spec.dynamic and j == 0) or name in binary_names
        rows.append(plug_in_ape(fit_result, data, name, discrete=discrete))
    return rows


def _write_ape_csv(path, apes, config):
    lines = [f"# {k}={v}" for k, v in config.items()]
    lines.append("covariate,estimate,se,method,n_units")
    for a in apes:
        lines.append(f"{a.covariate},{a.value:.8f},{a.se:.8f},{a.method},{a.n_units_used}")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")


def _cmd_estimate(args) -> int:
    data = load_csv(args.input, unit_col=args.unit_col, time_col=args.time_col,
                    outcome_col=args.outcome_col)
    if args.dynamic:
        data = add_lagged_outcome(data)
    binary_names = set(filter(None, args.binary_covariates.split(",")))
    config = _config_header(args)
    payload = {"config": config, "mode": args.mode}

    if args.mode == "gfe":
        if (args.gamma is None) == (args.k is None):
            print("error: mode gfe needs exactly one of --gamma or --k", file=sys.stderr)
            return 1
        spec = ModelSpec(link=args.link, intercept_mode="grouped", dynamic=args.dynamic)
        result = estimate_gfe(data, spec, gamma=args.gamma, k=args.k,
                              seed=args.seed, restarts=args.kmeans_restarts,
                              standardize=args.standardize)
        fit_result, apes = result.fit, list(result.apes)
        payload["k"] = result.clusters.K
        payload["fraction_obs_dropped"] = result.fraction_obs_dropped
        payload["dropped_groups"] = sorted(result.dropped_groups)
        if result.selection is not None:
            sel = result.selection
            payload["selection"] = {
                "gamma": sel.gamma,
                "chosen_K": sel.chosen_K,
                "noise_variance": sel.noise_variance,
                "rule_compliant": sel.rule_compliant,
                "lower_bound": sel.lower_bound,
                "upper_bound": sel.upper_bound,
                "objective_path": {str(k): v for k, v in sorted(sel.objective_path.items())},
                "verdict": rule_report(sel),
            }
    elif args.mode == "jackknife":
        spec = ModelSpec(link=args.link, intercept_mode="individual", dynamic=args.dynamic)
        fit_result = fit(data, spec)
        apes = [
            half_panel_jackknife_ape(
                data, spec, name,
                discrete=(args.dynamic and j == 0) or name in binary_names,
            )
            for j, name in enumerate(data.covariate_names)
        ]
    else:
        if args.mode == "firth":
            spec = ModelSpec(link=args.link, intercept_mode="individual", dynamic=args.dynamic)
            fit_result = fit_firth(data, spec)
        else:
            mode = "individual" if args.mode == "fe" else "pooled"
            spec = ModelSpec(link=args.link, intercept_mode=mode, dynamic=args.dynamic)
            fit_result = fit(data, spec)
        apes = _ape_rows(fit_result, data, binary_names)

    payload["fit"] = {
        "converged": fit_result.converged,
        "loglik": fit_result.loglik,
        "iterations": fit_result.iterations,
        "gradient_norm": fit_result.gradient_norm,
        "n_units_kept": int(fit_result.kept_units.size),
        "n_units_dropped": fit_result.dropped_units.n_dropped,
        "beta": {name: float(b) for name, b in zip(data.covariate_names, fit_result.beta)},
        "n_intercepts": len(fit_result.intercepts),
    }
    payload["apes"] = [
        {"covariate": a.covariate, "estimate": a.value, "se": a.se,
         "method": a.method, "n_units": a.n_units_used}
        for a in apes
    ]
    with open(args.out, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2)
        handle.write("\n")
    if args.ape_out:
        _write_ape_csv(args.ape_out, apes, config)
    return 0


def _cmd_simulate(args) -> int:
    try:
        estimators = tuple(
            dict.fromkeys(_ESTIMATOR_ALIASES[e.strip()] for e in args.estimators.split(",") if e.strip())
        )
    except KeyError as exc:
        print(f"error: unknown estimator {exc.args[0]!r}", file=sys.stderr)
        return 1
    gammas = tuple(float(g) for g in args.gamma.split(",") if g)
    design = SimDesign(
        kind=args.design, n=args.n, t=args.t, nu_alpha=args.nu_alpha,
        reps=args.reps, gamma_grid=gammas, estimators=estimators,
        seed=args.seed, kmeans_restarts=args.kmeans_restarts,
    )
    report = run_study(design, jobs=args.jobs)
    report_to_csv(report, args.out, timestamp=not args.no_timestamp)
    return 0


def _parse_train_ends(text):
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(v) for v in text.split(",") if v]


def _cmd_forecast(args) -> int:
    data = load_csv(args.input, unit_col=args.unit_col, time_col=args.time_col,
                    outcome_col=args.outcome_col)
    spec = ModelSpec(link=args.link, intercept_mode="individual", dynamic=args.dynamic)
    report = expanding_window_forecast(
        data, spec, method=args.method, train_end_years=_parse_train_ends(args.train_ends),
        gamma=args.gamma, train_start=args.train_start, seed=args.seed,
        restarts=args.kmeans_restarts,
    )
    config = _config_header(args)
    lines = [f"# {k}={v}" for k, v in config.items()]
    lines.append("forecast_year,estimator,gamma,true_pos,true_neg,false_pos,"
                 "false_neg,K,n_dropped,f1,cutoff")
    for r in report.rows:
        f1 = "-" if r.f1 is None else f"{r.f1:.6f}"
        gamma = "" if r.gamma is None else f"{r.gamma:g}"
        k = "" if r.k is None else str(r.k)
        lines.append(f"{r.year},{r.estimator},{gamma},{r.true_pos},{r.true_neg},"
                     f"{r.false_pos},{r.false_neg},{k},{r.n_dropped},{f1},{r.cutoff:.8f}")
    with open(args.out, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")

    if args.density_out:
        window = [l for l in data.time_ids
                  if (args.train_start is None or l >= args.train_start)]
        train = restrict_periods(data, window)
        est_panel = add_lagged_outcome(train) if args.dynamic else train
        base = ModelSpec(link=args.link, intercept_mode="individual", dynamic=args.dynamic)
        if args.method == "gfe":
            result = estimate_gfe(est_panel, base, gamma=args.gamma,
                                  seed=args.seed, restarts=args.kmeans_restarts)
            fit_result = result.fit
            label = f"gfe {args.gamma:g}"
        elif args.method == "firth":
            fit_result = fit_firth(est_panel, base)
            label = "firth"
        else:
            fit_result = fit(est_panel, base)
            label = "ml"
        frame = predicted_density_export({label: fit_result}, est_panel)
        frame.to_csv(args.density_out, index=False, float_format="%.8f")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "estimate":
            return _cmd_estimate(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
        return _cmd_forecast(args)
    except (PanelModelError, FileNotFoundError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
