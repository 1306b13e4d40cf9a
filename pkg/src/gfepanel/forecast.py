"""Expanding-window one-step-ahead forecasting for early-warning panels.

For every training cutoff the model is re-estimated, the classification
threshold is chosen in-sample by maximizing sensitivity + specificity,
and the next year's outcomes are scored into a confusion matrix. Units
whose intercept cannot be estimated in a window (complete separation)
are counted as dropped and excluded from the matrix; the grouped
estimator keeps every unit whose cluster shows outcome variation, so its
forecastable set always contains the individual-intercept one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from . import links
from .errors import DegenerateOutcomes, WindowTooShort
from .firth import fit_firth
from .gfe import estimate_gfe
from .mle import FitResult, ModelSpec, fit
from .panel import PanelDataset, add_lagged_outcome, restrict_periods

METHODS = ("ml", "gfe", "firth")


@dataclass(frozen=True)
class YearForecast:
    year: int
    estimator: str
    gamma: float | None
    true_pos: int
    true_neg: int
    false_pos: int
    false_neg: int
    f1: float | None          # None when TP = FP = FN = 0 (reported as "-")
    cutoff: float
    k: int | None             # number of groups, grouped estimator only
    n_dropped: int


@dataclass(frozen=True)
class ForecastReport:
    method: str
    gamma: float | None
    rows: tuple

    @property
    def years(self):
        return tuple(r.year for r in self.rows)


def choose_cutoff(fitted_probs, outcomes) -> float:
    """Threshold maximizing in-sample sensitivity + specificity.

    Candidates are the midpoints between consecutive distinct fitted
    probabilities; ties resolve to the lowest threshold. Classification
    is prob >= cutoff.
    """
    probs = np.asarray(fitted_probs, dtype=float)
    y = np.asarray(outcomes, dtype=float)
    n_pos = float((y == 1).sum())
    n_neg = float((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise DegenerateOutcomes("need both outcome classes to choose a cutoff")
    distinct = np.unique(probs)
    if distinct.size == 1:
        return float(distinct[0])
    cands = 0.5 * (distinct[:-1] + distinct[1:])
    pred = probs[None, :] >= cands[:, None]
    sens = (pred & (y == 1)).sum(axis=1) / n_pos
    spec = (~pred & (y == 0)).sum(axis=1) / n_neg
    return float(cands[int(np.argmax(sens + spec))])


def _window_fit(est_panel: PanelDataset, base_spec: ModelSpec, method: str,
                gamma, seed: int, restarts: int):
    if method == "ml":
        return fit(est_panel, base_spec), None
    if method == "firth":
        return fit_firth(est_panel, base_spec), None
    result = estimate_gfe(est_panel, base_spec, gamma=gamma, seed=seed,
                          restarts=restarts)
    return result.fit, result.clusters.K


def _in_sample_probs(fit_result: FitResult, est_panel: PanelDataset):
    kept = fit_result.kept_units
    eta = est_panel.X[kept] @ fit_result.beta + fit_result.alpha_by_unit[kept][:, None]
    return links.link_cdf(eta, fit_result.spec.link)


def f1_score(tp: int, fp: int, fn: int) -> float | None:
    denom = 2 * tp + fp + fn
    if denom == 0:
        return None
    return 2.0 * tp / denom


def expanding_window_forecast(data: PanelDataset, spec: ModelSpec,
                              method: str, train_end_years,
                              gamma: float | None = None,
                              train_start=None, seed: int = 0,
                              restarts: int = 10) -> ForecastReport:
    """Fit on [train_start, train_end], score year train_end + 1.

    The lagged regressor for the forecast year is the realized outcome at
    the training cutoff. Units without an estimable intercept in a window
    are excluded from the confusion matrix and counted as dropped.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if method == "gfe" and gamma is None:
        raise ValueError("the grouped method needs a gamma value")
    if train_start is None:
        train_start = data.time_ids[0]
    rows = []
    for train_end in train_end_years:
        pos_end = data.time_index(train_end)
        if pos_end + 1 >= data.n_periods:
            raise WindowTooShort(f"no data after training cutoff {train_end}")
        window = [l for l in data.time_ids if train_start <= l <= train_end]
        train = restrict_periods(data, window)
        est_panel = add_lagged_outcome(train) if spec.dynamic else train
        if est_panel.n_periods < 3:
            raise WindowTooShort(
                f"window ending {train_end} has {est_panel.n_periods} usable periods"
            )
        base_spec = ModelSpec(link=spec.link, intercept_mode="individual",
                              dynamic=spec.dynamic)
        window_seed = int(np.random.SeedSequence((seed, int(train_end))).generate_state(1)[0])
        fit_result, k = _window_fit(est_panel, base_spec, method, gamma,
                                    window_seed, restarts)
        probs = _in_sample_probs(fit_result, est_panel)
        cutoff = choose_cutoff(probs.ravel(), est_panel.y[fit_result.kept_units].ravel())

        test_pos = pos_end + 1
        x_test = data.X[:, test_pos, :]
        if spec.dynamic:
            lag = data.y[:, pos_end]
            x_test = np.concatenate([lag[:, None], x_test], axis=1)
        forecastable = np.flatnonzero(fit_result.level_of_unit >= 0)
        eta = x_test[forecastable] @ fit_result.beta + fit_result.alpha_by_unit[forecastable]
        predicted = links.link_cdf(eta, spec.link) >= cutoff
        actual = data.y[forecastable, test_pos] == 1.0
        tp = int(np.sum(predicted & actual))
        tn = int(np.sum(~predicted & ~actual))
        fp = int(np.sum(predicted & ~actual))
        fn = int(np.sum(~predicted & actual))
        rows.append(YearForecast(
            year=int(data.time_ids[test_pos]),
            estimator=method if method != "gfe" else f"gfe {gamma:g}",
            gamma=gamma if method == "gfe" else None,
            true_pos=tp, true_neg=tn, false_pos=fp, false_neg=fn,
            f1=f1_score(tp, fp, fn),
            cutoff=cutoff,
            k=k,
            n_dropped=int(data.n_units - forecastable.size),
        ))
    return ForecastReport(method=method, gamma=gamma, rows=tuple(rows))


def forecastable_units(fit_result: FitResult) -> frozenset:
    """Indices of units whose intercept is estimable under the fit."""
    return frozenset(int(i) for i in np.flatnonzero(fit_result.level_of_unit >= 0))


def predicted_density_export(fits: dict, data: PanelDataset) -> pd.DataFrame:
    """In-sample predicted probabilities per estimator, one row per cell.

    Units dropped by a fit contribute their ML limit: probability 0 when
    their outcome is constant at 0, probability 1 when constant at 1,
    which is what produces the mass at zero for rare-event panels.
    """
    frames = []
    for label, fit_result in fits.items():
        prob = np.empty((data.n_units, data.n_periods))
        kept = fit_result.kept_units
        eta = data.X[kept] @ fit_result.beta + fit_result.alpha_by_unit[kept][:, None]
        prob[kept] = links.link_cdf(eta, fit_result.spec.link)
        dropped = np.flatnonzero(fit_result.level_of_unit < 0)
        if dropped.size:
            prob[dropped] = np.round(data.y[dropped].mean(axis=1))[:, None]
        frames.append(pd.DataFrame({
            "estimator": label,
            "unit": np.repeat(data.unit_ids, data.n_periods),
            "time": np.tile(data.time_ids, data.n_units),
            "prob": prob.ravel(),
        }))
    return pd.concat(frames, ignore_index=True)
