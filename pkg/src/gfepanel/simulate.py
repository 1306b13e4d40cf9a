"""Monte Carlo engine for the static, dynamic, and trending logit designs.

Each replication draws a panel, runs the requested estimators, and the
study aggregates mean/median ratios to the population APE, the Monte
Carlo dispersion of the estimates, empirical t-test sizes, the share of
observations lost to complete separation, and the average number of
groups chosen by the gamma rule.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache, partial

import numpy as np

from . import links
from .ape import half_panel_jackknife_ape, plug_in_ape
from .clustering import _scan_objective_path, noise_variance
from .errors import PanelModelError, UnsupportedModelSpec
from .firth import fit_firth
from .gfe import clustering_moments
from .mle import ModelSpec, fit
from .panel import PanelDataset, add_lagged_outcome, detect_separation

BURN_IN = 100
ORACLE_SEED = 987654321
ORACLE_CELLS = 2_000_000
Z_95 = 1.959963984540054
Z_90 = 1.6448536269514722

KINDS = ("static", "dynamic", "trending")
ESTIMATORS = ("infeasible", "ml", "jackknife", "firth", "gfe")

#: Extension point for additional estimators (e.g. analytical bias
#: corrections). A registered hook is called per replication as
#: hook(design, panel, est_panel, spec) and returns (ape_value, se,
#: pct_cs, k) with None entries where a column does not apply, or None
#: for a failed replication.
EXTRA_ESTIMATORS: dict = {}


def register_estimator(name: str, hook) -> None:
    """Register an extra per-replication estimator under `name`, making
    it usable in SimDesign.estimators next to the built-in ones."""
    if name in ESTIMATORS:
        raise ValueError(f"{name!r} is a built-in estimator")
    EXTRA_ESTIMATORS[name] = hook


@dataclass(frozen=True)
class SimDesign:
    """One simulation scenario; hashable so oracle values can be cached."""

    kind: str
    n: int
    t: int
    nu_alpha: float
    slopes: tuple = (1.0, 1.0)
    lag_coef: float = 0.5
    reps: int = 200
    gamma_grid: tuple = (0.1, 0.4, 0.7, 1.0)
    estimators: tuple = ("infeasible", "ml", "jackknife", "firth", "gfe")
    seed: int = 0
    kmeans_restarts: int = 10

    def __post_init__(self):
        object.__setattr__(self, "slopes", tuple(float(s) for s in self.slopes))
        object.__setattr__(self, "gamma_grid", tuple(float(g) for g in self.gamma_grid))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if self.kind not in KINDS:
            raise ValueError(f"unknown design kind {self.kind!r}")
        unknown = set(self.estimators) - set(ESTIMATORS) - set(EXTRA_ESTIMATORS)
        if unknown:
            raise ValueError(f"unknown estimators {sorted(unknown)}")
        if self.kind != "static" and "firth" in self.estimators:
            raise UnsupportedModelSpec(
                "the penalized estimator is available for static designs only"
            )

    @property
    def dynamic(self) -> bool:
        return self.kind in ("dynamic", "trending")


@dataclass(frozen=True)
class SimRow:
    estimator: str
    gamma: float | None
    mean_ratio: float | None
    median_ratio: float | None
    sd_ape: float | None
    size_05: float | None
    size_10: float | None
    pct_cs: float | None
    avg_k: float | None
    failures: int
    n_used: int


@dataclass(frozen=True)
class SimReport:
    design: SimDesign
    population_ape: float
    rows: tuple


def _stream(master: int, rep: int, lane: int) -> np.random.SeedSequence:
    return np.random.SeedSequence((master, rep, lane))


def draw_panel(design: SimDesign, rep_seed: int):
    """Simulate one panel; returns (panel, true unit effects alpha).

    Static panels carry periods 1..T. Dynamic and trending panels carry
    T+1 periods labeled 0..T: after burn-in the last T+1 outcomes are
    kept, and the first serves as the initial condition consumed by the
    lag transform. The trending drift 0.1*(t - T/2) extends linearly
    through the burn-in window.
    """
    rng = np.random.default_rng(_stream(design.seed, rep_seed, 0))
    n, t = design.n, design.t
    theta = np.asarray(design.slopes)
    alpha = rng.normal(design.nu_alpha, 1.0, n)
    if design.kind == "static":
        x = rng.standard_normal((n, t, 2)) + alpha[:, None, None]
        u = rng.logistic(size=(n, t))
        y = (x @ theta + alpha[:, None] + u > 0.0).astype(float)
        panel = PanelDataset(
            [f"u{i}" for i in range(n)], range(1, t + 1), y, x, ("x1", "x2")
        )
        return panel, alpha
    total = BURN_IN + t + 1
    tvals = np.arange(total) - BURN_IN   # -BURN_IN .. t, kept window is 0..t
    x = rng.standard_normal((n, total, 2)) + alpha[:, None, None]
    if design.kind == "trending":
        x += (0.1 * (tvals - t / 2.0))[None, :, None]
    u = rng.logistic(size=(n, total))
    y = np.empty((n, total))
    idx = x[:, 0] @ theta + alpha + u[:, 0]
    y[:, 0] = idx > 0.0
    for s in range(1, total):
        idx = design.lag_coef * y[:, s - 1] + x[:, s] @ theta + alpha + u[:, s]
        y[:, s] = idx > 0.0
    keep = slice(total - (t + 1), total)
    panel = PanelDataset(
        [f"u{i}" for i in range(n)], range(0, t + 1), y[:, keep], x[:, keep],
        ("x1", "x2"),
    )
    return panel, alpha


def true_unit_effects(design: SimDesign, est_panel: PanelDataset,
                      alpha: np.ndarray) -> np.ndarray:
    """Per-unit time-average of the true per-cell effect of the target
    covariate (x1 for static designs, the lagged outcome otherwise)."""
    theta = np.asarray(design.slopes)
    if design.kind == "static":
        eta = est_panel.X @ theta + alpha[:, None]
        mu = links.link_pdf(eta, "logit") * theta[0]
    else:
        base = est_panel.X[:, :, 1:] @ theta + alpha[:, None]
        mu = links.link_cdf(base + design.lag_coef, "logit") - links.link_cdf(base, "logit")
    return mu.mean(axis=1)


@lru_cache(maxsize=None)
def _population_ape_cached(kind, t, nu_alpha, slopes, lag_coef, n_cells, seed):
    theta = np.asarray(slopes)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0)))
    if kind == "static":
        alpha = rng.normal(nu_alpha, 1.0, n_cells)
        x = rng.standard_normal((n_cells, 2)) + alpha[:, None]
        return float(np.mean(links.link_pdf(x @ theta + alpha, "logit")) * theta[0])
    # stationary (or trending) law sampled from a wide simulated panel
    t_keep = t if kind == "trending" else 8
    n_big = max(1, n_cells // t_keep)
    design = SimDesign(
        kind=kind, n=n_big, t=t_keep, nu_alpha=nu_alpha, slopes=slopes,
        lag_coef=lag_coef, estimators=("ml",), seed=seed,
    )
    panel, alpha = draw_panel(design, 0)
    est = add_lagged_outcome(panel)
    return float(true_unit_effects(design, est, alpha).mean())


def population_ape(design: SimDesign, n_cells: int = ORACLE_CELLS,
                   seed: int = ORACLE_SEED) -> float:
    """Monte Carlo integral of the true effect under the design's DGP.

    Cached per (kind, nu_alpha, coefficients); the static and stationary
    dynamic values do not depend on the panel length, the trending value
    does (the drift spans the observation window).
    """
    t_key = design.t if design.kind == "trending" else 0
    return _population_ape_cached(
        design.kind, t_key, design.nu_alpha, design.slopes, design.lag_coef,
        n_cells, seed,
    )


def _run_replication(design: SimDesign, rep: int) -> dict:
    """One replication: draw, estimate, return raw per-estimator records.

    Records are (value, se, pct_cs, k) tuples keyed by estimator label;
    a failed estimator stores None.
    """
    panel, alpha = draw_panel(design, rep)
    est_panel = add_lagged_outcome(panel) if design.dynamic else panel
    spec = ModelSpec(link="logit", intercept_mode="individual", dynamic=design.dynamic)
    sep = detect_separation(est_panel)
    pct_cs = 100.0 * sep.fraction_dropped_obs
    out = {}

    if "infeasible" in design.estimators:
        mu_i = true_unit_effects(design, est_panel, alpha)
        kept = np.array(sorted(set(range(design.n)) - sep.separated_units), dtype=int)
        out["infeasible"] = (
            (float(mu_i[kept].mean()), None, None, None) if kept.size else None
        )

    target = 0   # x1 in static designs, the lagged outcome otherwise

    ml_fit = None
    if "ml" in design.estimators or "jackknife" in design.estimators:
        try:
            ml_fit = fit(est_panel, spec)
        except PanelModelError:
            ml_fit = None
    if "ml" in design.estimators:
        try:
            if ml_fit is None or not ml_fit.converged:
                raise PanelModelError("fit failed")
            a = plug_in_ape(ml_fit, est_panel, target)
            out["ml"] = (a.value, a.se, pct_cs, None)
        except PanelModelError:
            out["ml"] = None

    if "jackknife" in design.estimators:
        try:
            a = half_panel_jackknife_ape(est_panel, spec, target)
            out["jackknife"] = (a.value, a.se, pct_cs, None)
        except PanelModelError:
            out["jackknife"] = None

    if "firth" in design.estimators:
        try:
            f = fit_firth(panel, spec)
            if not f.converged:
                raise PanelModelError("penalized fit failed")
            a = plug_in_ape(f, panel, target)
            out["firth"] = (a.value, a.se, 0.0, None)
        except PanelModelError:
            out["firth"] = None

    if "gfe" in design.estimators and design.gamma_grid:
        cluster_seed = int(_stream(design.seed, rep, 1).generate_state(1)[0])
        points, moment_panel = clustering_moments(est_panel, design.dynamic)
        vhat = noise_variance(moment_panel)
        path, results = _scan_objective_path(
            points, design.gamma_grid, vhat, design.kmeans_restarts,
            cluster_seed, k_max=design.n,
        )
        fitted = {}
        for gamma in design.gamma_grid:
            key = ("gfe", gamma)
            chosen = next(
                (k for k in sorted(path) if path[k] <= gamma * vhat), None
            )
            if chosen is None:
                out[key] = None
                continue
            try:
                if chosen not in fitted:
                    gspec = spec.with_assignments(results[chosen].assignments)
                    gfit = fit(est_panel, gspec)
                    if not gfit.converged:
                        raise PanelModelError("grouped fit failed")
                    ape = plug_in_ape(gfit, est_panel, target)
                    fitted[chosen] = (ape, 100.0 * gfit.dropped_units.fraction_dropped_obs)
                ape, pct = fitted[chosen]
                out[key] = (ape.value, ape.se, pct, chosen)
            except PanelModelError:
                out[key] = None

    for name in design.estimators:
        if name in EXTRA_ESTIMATORS:
            try:
                out[name] = EXTRA_ESTIMATORS[name](design, panel, est_panel, spec)
            except PanelModelError:
                out[name] = None
    return out


def _row_keys(design: SimDesign):
    keys = []
    for est in design.estimators:
        if est == "gfe":
            keys.extend(("gfe", g) for g in design.gamma_grid)
        else:
            keys.append(est)
    return keys


def _aggregate(design: SimDesign, mu0: float, records: list) -> SimReport:
    rows = []
    for key in _row_keys(design):
        label, gamma = (key, None) if isinstance(key, str) else key
        recs = [r.get(key) for r in records]
        used = [r for r in recs if r is not None]
        failures = len(recs) - len(used)
        if not used:
            rows.append(SimRow(label, gamma, None, None, None, None, None,
                               None, None, failures, 0))
            continue
        vals = np.array([u[0] for u in used])
        ses = [u[1] for u in used]
        pcts = [u[2] for u in used]
        ks = [u[3] for u in used]
        ratios = vals / mu0
        sd = float(vals.std(ddof=1)) if len(vals) > 1 else None
        if all(s is not None for s in ses):
            tstats = np.abs((vals - mu0) / np.array(ses))
            size05 = float(np.mean(tstats > Z_95))
            size10 = float(np.mean(tstats > Z_90))
        else:
            size05 = size10 = None
        pct = (
            float(np.mean([p for p in pcts if p is not None]))
            if any(p is not None for p in pcts) else None
        )
        avg_k = (
            float(np.mean([k for k in ks if k is not None]))
            if any(k is not None for k in ks) else None
        )
        rows.append(SimRow(label, gamma, float(ratios.mean()),
                           float(np.median(ratios)), sd, size05, size10,
                           pct, avg_k, failures, len(used)))
    return SimReport(design=design, population_ape=mu0, rows=tuple(rows))


def run_study(design: SimDesign, jobs: int = 1) -> SimReport:
    """Run all replications and aggregate; bit-identical given the seed.

    Replications are independent; jobs > 1 fans them out over processes
    and the reduction stays ordered by replication index.
    """
    mu0 = population_ape(design)
    worker = partial(_run_replication, design)
    if jobs and jobs > 1:
        chunk = max(1, design.reps // (jobs * 8))
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(worker, range(design.reps), chunksize=chunk))
    else:
        records = [worker(rep) for rep in range(design.reps)]
    return _aggregate(design, mu0, records)


def _fmt(value, digits=6):
    if value is None:
        return ""
    return f"{value:.{digits}f}"


def report_to_csv(report: SimReport, path, timestamp: bool = True,
                  extra_config: dict | None = None) -> None:
    """Write the aggregated study in the layout of the result tables,
    with the full resolved configuration in comment headers."""
    d = report.design
    lines = []
    config = {
        "design": d.kind, "n": d.n, "t": d.t, "nu_alpha": d.nu_alpha,
        "slopes": ",".join(str(s) for s in d.slopes), "lag_coef": d.lag_coef,
        "reps": d.reps, "gamma_grid": ",".join(str(g) for g in d.gamma_grid),
        "estimators": ",".join(d.estimators), "seed": d.seed,
        "kmeans_restarts": d.kmeans_restarts,
        "population_ape": f"{report.population_ape:.8f}",
    }
    if extra_config:
        config.update(extra_config)
    if timestamp:
        import datetime

        config["generated"] = datetime.datetime.now().isoformat(timespec="seconds")
    for key, value in config.items():
        lines.append(f"# {key}={value}")
    lines.append("estimator,gamma,mean_ratio,median_ratio,sd_ape,size_05,"
                 "size_10,pct_cs,avg_K,failures,n_used")
    for row in report.rows:
        lines.append(",".join([
            row.estimator,
            _fmt(row.gamma, 3),
            _fmt(row.mean_ratio),
            _fmt(row.median_ratio),
            _fmt(row.sd_ape),
            _fmt(row.size_05),
            _fmt(row.size_10),
            _fmt(row.pct_cs, 3),
            _fmt(row.avg_k, 3),
            str(row.failures),
            str(row.n_used),
        ]))
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")
