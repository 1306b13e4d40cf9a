"""Balanced binary-outcome panel data: container, CSV I/O, lagging, separation.

The panel is stored dense: outcomes as an (N, T) 0/1 matrix and covariates
as an (N, T, J) array, with unit and time keys kept alongside. Everything
here is a pure function of an immutable dataset, so datasets can be shared
freely across worker processes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import (
    EmptyPeriodRange,
    MissingColumn,
    NonBinaryOutcome,
    NonFiniteCovariate,
    PanelTooShort,
    UnbalancedPanel,
)

LAG_COVARIATE = "y_lag"


@dataclass(frozen=True)
class PanelDataset:
    """Balanced N x T panel of binary outcomes with J real covariates.

    Invariants enforced at construction: consistent shapes, y entries in
    {0, 1}, finite covariates, T >= 2. CSV ingestion additionally requires
    N >= 2; the in-memory container tolerates N = 1 so that single-unit
    moment formulas remain expressible.
    """

    unit_ids: tuple
    time_ids: tuple
    y: np.ndarray = field(repr=False)
    X: np.ndarray = field(repr=False)
    covariate_names: tuple

    def __post_init__(self):
        y = np.ascontiguousarray(np.asarray(self.y, dtype=np.float64))
        X = np.ascontiguousarray(np.asarray(self.X, dtype=np.float64))
        object.__setattr__(self, "unit_ids", tuple(self.unit_ids))
        object.__setattr__(self, "time_ids", tuple(self.time_ids))
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        n, t = len(self.unit_ids), len(self.time_ids)
        if y.shape != (n, t):
            raise ValueError(f"y has shape {y.shape}, expected {(n, t)}")
        if X.ndim != 3 or X.shape[:2] != (n, t) or X.shape[2] != len(self.covariate_names):
            raise ValueError(
                f"X has shape {X.shape}, expected {(n, t, len(self.covariate_names))}"
            )
        if n < 1:
            raise ValueError("panel needs at least one unit")
        if t < 2:
            raise ValueError("panel needs at least two periods")
        if not np.isin(y, (0.0, 1.0)).all():
            raise NonBinaryOutcome("outcome matrix contains entries other than 0/1")
        if not np.isfinite(X).all():
            raise NonFiniteCovariate("covariate array contains non-finite values")
        if len(set(self.unit_ids)) != n:
            raise ValueError("duplicate unit identifiers")
        if list(self.time_ids) != sorted(self.time_ids):
            raise ValueError("time identifiers must be sorted")
        y.setflags(write=False)
        X.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)

    @property
    def n_units(self) -> int:
        return len(self.unit_ids)

    @property
    def n_periods(self) -> int:
        return len(self.time_ids)

    @property
    def n_covariates(self) -> int:
        return len(self.covariate_names)

    def time_index(self, label) -> int:
        try:
            return self.time_ids.index(label)
        except ValueError:
            raise EmptyPeriodRange(f"time label {label!r} not in panel") from None


@dataclass(frozen=True)
class SeparationReport:
    """Units whose outcome never varies over the estimation periods."""

    separated_units: frozenset
    n_kept: int
    fraction_dropped_obs: float

    @property
    def n_dropped(self) -> int:
        return len(self.separated_units)


def load_csv(path, unit_col="unit", time_col="time", outcome_col="y",
             covariate_cols=None) -> PanelDataset:
    """Read a long-format CSV (one row per unit-period) into a PanelDataset.

    Expected header: ``unit,time,y,<covariates...>`` by default; pass the
    schema arguments to remap. Time values must coerce to integers. Every
    unit must appear exactly once per period.
    """
    df = pd.read_csv(path)
    for col in (unit_col, time_col, outcome_col):
        if col not in df.columns:
            raise MissingColumn(f"column {col!r} not found in {path}")
    if covariate_cols is None:
        covariate_cols = [c for c in df.columns if c not in (unit_col, time_col, outcome_col)]
    else:
        for col in covariate_cols:
            if col not in df.columns:
                raise MissingColumn(f"covariate column {col!r} not found in {path}")

    bad = ~df[outcome_col].isin([0, 1])
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise NonBinaryOutcome(
            f"outcome column {outcome_col!r} has value {df[outcome_col].iloc[row]!r} at row {row}"
        )
    try:
        times = df[time_col].astype(int)
    except (ValueError, TypeError) as exc:
        raise UnbalancedPanel(f"time column {time_col!r} is not integer-sortable") from exc
    df = df.assign(**{time_col: times}).sort_values([unit_col, time_col], kind="mergesort")

    time_ids = sorted(df[time_col].unique().tolist())
    unit_ids = df[unit_col].unique().tolist()
    counts = df.groupby(unit_col, sort=False)[time_col].apply(
        lambda s: s.tolist() == time_ids
    )
    if not counts.all():
        offenders = counts.index[~counts].tolist()
        raise UnbalancedPanel(f"units {offenders} do not cover every period exactly once")
    if len(unit_ids) < 2:
        raise UnbalancedPanel("panel needs at least two units")
    if len(time_ids) < 2:
        raise UnbalancedPanel("panel needs at least two periods")

    n, t = len(unit_ids), len(time_ids)
    y = df[outcome_col].to_numpy(dtype=np.float64).reshape(n, t)
    X = df[list(covariate_cols)].to_numpy(dtype=np.float64).reshape(n, t, len(covariate_cols))
    if not np.isfinite(X).all():
        raise NonFiniteCovariate("covariate columns contain NaN or infinite values")
    return PanelDataset(unit_ids, time_ids, y, X, tuple(covariate_cols))


def write_csv(data: PanelDataset, path, unit_col="unit", time_col="time",
              outcome_col="y") -> None:
    """Emit the same long-format schema that load_csv reads."""
    n, t, j = data.n_units, data.n_periods, data.n_covariates
    out = {
        unit_col: np.repeat(data.unit_ids, t),
        time_col: np.tile(data.time_ids, n),
        outcome_col: data.y.reshape(-1).astype(int),
    }
    for k, name in enumerate(data.covariate_names):
        out[name] = data.X[:, :, k].reshape(-1)
    pd.DataFrame(out).to_csv(path, index=False)


def _resolve_periods(data: PanelDataset, periods):
    if periods is None:
        return np.arange(data.n_periods)
    idx = np.array([data.time_index(p) for p in periods])
    if idx.size < 2:
        raise EmptyPeriodRange("need at least two estimation periods")
    return idx


def detect_separation(data: PanelDataset, periods=None) -> SeparationReport:
    """Find the units with a constant outcome over the estimation periods.

    Those are exactly the units whose intercept has no finite ML estimate;
    they are dropped by individual-intercept fits.
    """
    idx = _resolve_periods(data, periods)
    sums = data.y[:, idx].sum(axis=1)
    t_est = idx.size
    separated = np.flatnonzero((sums == 0) | (sums == t_est))
    n_dropped = separated.size
    return SeparationReport(
        separated_units=frozenset(int(i) for i in separated),
        n_kept=data.n_units - n_dropped,
        fraction_dropped_obs=n_dropped / data.n_units,
    )


def add_lagged_outcome(data: PanelDataset, lag_name=LAG_COVARIATE) -> PanelDataset:
    """Consume the first period as initial condition and prepend y_{t-1}.

    Returns a panel over periods 2..T with J+1 covariates; the new first
    covariate at time t is the outcome at t-1.
    """
    if data.n_periods < 3:
        raise PanelTooShort("lag construction needs T >= 3")
    lag = data.y[:, :-1]
    X = np.concatenate([lag[:, :, None], data.X[:, 1:, :]], axis=2)
    return PanelDataset(
        data.unit_ids,
        data.time_ids[1:],
        data.y[:, 1:],
        X,
        (lag_name,) + data.covariate_names,
    )


def individual_means(data: PanelDataset) -> np.ndarray:
    """Time-average of each unit's covariates, the clustering moments.

    The outcome average is deliberately not included: with persistent or
    rare outcomes it carries little cross-unit information.
    """
    return data.X.mean(axis=1)


def restrict_periods(data: PanelDataset, periods) -> PanelDataset:
    """Sub-panel over the given time labels (order preserved)."""
    idx = _resolve_periods(data, periods)
    return PanelDataset(
        data.unit_ids,
        [data.time_ids[i] for i in idx],
        data.y[:, idx],
        data.X[:, idx, :],
        data.covariate_names,
    )


def select_covariates(data: PanelDataset, names) -> PanelDataset:
    """Sub-panel keeping only the named covariate columns."""
    cols = [data.covariate_names.index(n) for n in names]
    return PanelDataset(
        data.unit_ids,
        data.time_ids,
        data.y,
        data.X[:, :, cols],
        tuple(names),
    )
