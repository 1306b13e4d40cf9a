"""Two-step grouped-fixed-effects estimation.

Step one discretizes unit heterogeneity by k-means on the time-averaged
exogenous covariates (the lagged outcome never enters the moments); step
two fits the model with one intercept per cluster and drops only the
clusters whose pooled outcome never varies. APEs and the K-rule verdict
come along with the fit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ape import ApeEstimate, plug_in_ape
from .clustering import (
    LOWER_MARGIN,
    ClusterResult,
    KSelection,
    _compliance,
    _select_K_with_clusters,
    kmeans,
)
from .errors import AllGroupsSeparated, NoUsableUnits
from .mle import FitResult, ModelSpec, fit
from .panel import PanelDataset, individual_means, select_covariates


@dataclass(frozen=True)
class GfeResult:
    selection: KSelection | None     # None when K was fixed by the caller
    clusters: ClusterResult
    fit: FitResult
    apes: tuple
    dropped_groups: frozenset
    fraction_obs_dropped: float

    @property
    def n_groups(self) -> int:
        return self.clusters.K


def clustering_moments(data: PanelDataset, dynamic: bool,
                       standardize: bool = False):
    """Unit-mean moment vectors and the matching panel for the noise scale.

    For dynamic models the lagged outcome (first covariate) is excluded:
    it is a transform of the response, and response averages are poor
    discriminators of heterogeneity under persistence. Standardization,
    when requested, rescales covariates by the cross-unit dispersion of
    their means so that mixed measurement units do not dominate.
    """
    if dynamic:
        exog = data.covariate_names[1:]
        base = select_covariates(data, exog)
    else:
        base = data
    points = individual_means(base)
    if standardize:
        scale = points.std(axis=0, ddof=0)
        scale[scale == 0.0] = 1.0
        scaled_x = base.X / scale[None, None, :]
        base = PanelDataset(base.unit_ids, base.time_ids, base.y, scaled_x,
                            base.covariate_names)
        points = points / scale[None, :]
    return points, base


def estimate_gfe(data: PanelDataset, spec: ModelSpec, gamma: float | None = None,
                 k: int | None = None, seed: int = 0, restarts: int = 10,
                 standardize: bool = False) -> GfeResult:
    """Classification step, estimation step, APEs."""
    if (gamma is None) == (k is None):
        raise ValueError("pass exactly one of gamma or k")
    points, moment_panel = clustering_moments(data, spec.dynamic, standardize)
    if gamma is not None:
        selection, clusters = _select_K_with_clusters(
            points, gamma, moment_panel, restarts=restarts, seed=seed
        )
    else:
        selection = None
        clusters = kmeans(points, k, restarts=restarts, seed=seed)

    grouped_spec = spec.with_assignments(clusters.assignments)
    try:
        fit_result = fit(data, grouped_spec)
    except NoUsableUnits as exc:
        raise AllGroupsSeparated(str(exc)) from exc

    apes = []
    if fit_result.converged:
        for j, name in enumerate(data.covariate_names):
            discrete = spec.dynamic and j == 0
            apes.append(plug_in_ape(fit_result, data, name, discrete=discrete))
    all_groups = set(int(g) for g in np.unique(clusters.assignments))
    kept_groups = set(fit_result.intercepts)
    return GfeResult(
        selection=selection,
        clusters=clusters,
        fit=fit_result,
        apes=tuple(apes),
        dropped_groups=frozenset(all_groups - kept_groups),
        fraction_obs_dropped=fit_result.dropped_units.fraction_dropped_obs,
    )


def rule_report(selection: KSelection) -> str:
    """Human-readable verdict on the sqrt(T) << K < T*sqrt(N) window."""
    k = selection.chosen_K
    lower, upper = selection.lower_bound, selection.upper_bound
    threshold = LOWER_MARGIN * lower
    if k >= upper:
        return (
            f"too many groups: K={k} is at or above the upper bound "
            f"T*sqrt(N)={upper:.2f}; the incidental-parameter noise of the "
            f"group intercepts may dominate"
        )
    if k < threshold:
        return (
            f"too few groups: K={k} is too close to the lower bound "
            f"sqrt(T)={lower:.2f} (needs K >= {threshold:.2f}); the "
            f"discretization may approximate the heterogeneity poorly"
        )
    return (
        f"compliant: K={k} lies in [{threshold:.2f}, {upper:.2f}), so both "
        f"the approximation error and the intercept noise stay small"
    )


def rule_report_fixed_k(k: int, n_units: int, n_periods: int) -> str:
    """Verdict for an explicitly chosen K outside the gamma rule."""
    compliant, lower, upper = _compliance(k, n_units, n_periods)
    sel = KSelection(
        gamma=1.0, chosen_K=k, noise_variance=float("nan"),
        objective_path={}, rule_compliant=compliant,
        lower_bound=lower, upper_bound=upper,
    )
    return rule_report(sel)
