"""Plug-in average partial effects, delta-method inference, and the
half-panel jackknife correction.

The plug-in averages the per-observation effect over all N*T cells of the
estimation panel. Units dropped for complete separation keep their limit
contribution: their fitted probabilities are exactly 0 or 1, so their
partial effects vanish and they enter the average as zeros. Standard
errors combine the cross-unit dispersion of the zero-extended per-unit
effects with the delta-method quadratic form in the fit covariance:

    SE^2 = s2_mu / N + g' V g,

where s2_mu averages (mu_bar_i - mu_hat)^2 over all N units and g is the
analytic gradient of the APE in (slopes, intercepts).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import links
from .errors import (
    DroppedUnit,
    NonBinaryCovariate,
    NotConverged,
    PanelTooShort,
    SingularVcov,
    UnsupportedModelSpec,
)
from .mle import FitResult, ModelSpec, fit as fit_model
from .panel import PanelDataset, restrict_periods


@dataclass(frozen=True)
class ApeEstimate:
    """APE over the full panel; n_units_used counts the units whose cells
    contribute non-degenerate effects (the non-dropped ones)."""

    covariate: str
    value: float
    se: float
    n_units_used: int
    method: str = "plugin"

    def t_stat(self, reference: float) -> float:
        return (self.value - reference) / self.se


def _covariate_index(data: PanelDataset, covariate) -> int:
    if isinstance(covariate, str):
        return data.covariate_names.index(covariate)
    return int(covariate)


def _is_discrete(fit: FitResult, data: PanelDataset, j: int, discrete) -> bool:
    if discrete is not None:
        return bool(discrete)
    # the lagged outcome is always a finite-difference effect
    return bool(fit.spec.dynamic and j == 0)


def partial_effect_continuous(fit: FitResult, data: PanelDataset, covariate,
                              unit: int, time: int) -> float:
    """F'(eta_it) * beta_j at one cell of the panel."""
    j = _covariate_index(data, covariate)
    if fit.level_of_unit[unit] < 0:
        raise DroppedUnit(f"unit {data.unit_ids[unit]!r} was dropped from the fit")
    eta = data.X[unit, time] @ fit.beta + fit.alpha_by_unit[unit]
    return float(links.link_pdf(eta, fit.spec.link) * fit.beta[j])


def partial_effect_discrete(fit: FitResult, data: PanelDataset, covariate,
                            unit: int, time: int) -> float:
    """F(eta with x_j = 1) - F(eta with x_j = 0) at one cell."""
    j = _covariate_index(data, covariate)
    if fit.level_of_unit[unit] < 0:
        raise DroppedUnit(f"unit {data.unit_ids[unit]!r} was dropped from the fit")
    vals = data.X[:, :, j]
    if not np.isin(vals, (0.0, 1.0)).all():
        raise NonBinaryCovariate(f"covariate {covariate!r} is not 0/1-valued")
    eta = data.X[unit, time] @ fit.beta + fit.alpha_by_unit[unit]
    base = eta - data.X[unit, time, j] * fit.beta[j]
    link = fit.spec.link
    return float(links.link_cdf(base + fit.beta[j], link) - links.link_cdf(base, link))


def _effects_and_gradient(fit: FitResult, data: PanelDataset, j: int,
                          discrete: bool):
    """Per-cell effects over the kept units plus the gradient of the
    full-panel APE with respect to (beta, intercepts).

    Dropped units contribute zero effects and zero gradient (both F' and
    F'' vanish in the infinite-intercept limit), so only kept cells are
    evaluated while the normalization stays N * T.
    """
    kept = fit.kept_units
    X = data.X[kept]
    eta = X @ fit.beta + fit.alpha_by_unit[kept][:, None]
    lvl = fit.level_of_unit[kept]
    n_levels = len(fit.level_labels)
    n_cov = data.n_covariates
    cells_total = data.n_units * data.n_periods
    link = fit.spec.link
    if discrete:
        vals = data.X[:, :, j]
        if not np.isin(vals, (0.0, 1.0)).all():
            raise NonBinaryCovariate(f"covariate {j} is not 0/1-valued")
        base = eta - X[:, :, j] * fit.beta[j]
        on, off = base + fit.beta[j], base
        mu = links.link_cdf(on, link) - links.link_cdf(off, link)
        pdf_on, pdf_off = links.link_pdf(on, link), links.link_pdf(off, link)
        diff = pdf_on - pdf_off
        g_beta = np.einsum("nt,ntm->m", diff, X) / cells_total
        # x_j itself enters only through the switched index
        g_beta[j] = pdf_on.sum() / cells_total
        g_alpha = np.bincount(lvl, weights=diff.sum(axis=1), minlength=n_levels) / cells_total
    else:
        pdf = links.link_pdf(eta, link)
        curv = links.link_pdf_deriv(eta, link) * fit.beta[j]
        mu = pdf * fit.beta[j]
        g_beta = np.einsum("nt,ntm->m", curv, X) / cells_total
        g_beta[j] += pdf.sum() / cells_total
        g_alpha = np.bincount(lvl, weights=curv.sum(axis=1), minlength=n_levels) / cells_total
    return mu, np.concatenate([g_beta[:n_cov], g_alpha])


def _se_from_parts(fit: FitResult, data: PanelDataset, mu: np.ndarray,
                   grad: np.ndarray, value: float) -> float:
    if fit.vcov is None or not np.isfinite(fit.vcov).all():
        raise SingularVcov("fit covariance is unavailable or non-finite")
    n = data.n_units
    per_unit = np.zeros(n)
    per_unit[fit.kept_units] = mu.mean(axis=1)
    s2_mu = float(((per_unit - value) ** 2).mean())
    quad = float(grad @ fit.vcov @ grad)
    return float(np.sqrt(s2_mu / n + max(quad, 0.0)))


def plug_in_ape(fit: FitResult, data: PanelDataset, covariate,
                discrete=None) -> ApeEstimate:
    """Full-panel average of the per-cell effect; SE by the delta method."""
    if not fit.converged:
        raise NotConverged("cannot compute effects from an unconverged fit")
    j = _covariate_index(data, covariate)
    disc = _is_discrete(fit, data, j, discrete)
    mu, grad = _effects_and_gradient(fit, data, j, disc)
    value = float(mu.sum() / (data.n_units * data.n_periods))
    return ApeEstimate(
        covariate=str(data.covariate_names[j]),
        value=value,
        se=_se_from_parts(fit, data, mu, grad, value),
        n_units_used=int(fit.kept_units.size),
        method="plugin",
    )


def delta_method_se(fit: FitResult, data: PanelDataset, covariate,
                    discrete=None) -> float:
    """Standalone SE of the plug-in APE for the given covariate."""
    j = _covariate_index(data, covariate)
    disc = _is_discrete(fit, data, j, discrete)
    mu, grad = _effects_and_gradient(fit, data, j, disc)
    value = float(mu.sum() / (data.n_units * data.n_periods))
    return _se_from_parts(fit, data, mu, grad, value)


def jackknife_combine(full: float, half1: float, half2: float) -> float:
    return 2.0 * full - 0.5 * (half1 + half2)


def _half_period_labels(time_ids):
    t = len(time_ids)
    first = time_ids[: (t + 1) // 2]
    second = time_ids[t // 2:]
    return first, second


def half_panel_jackknife_ape(data: PanelDataset, spec: ModelSpec, covariate,
                             discrete=None) -> ApeEstimate:
    """Half-panel bias correction 2*full - (half1 + half2)/2.

    Each half re-detects separation on its own periods and uses its own
    retained sample; an odd panel shares the middle period between halves.
    The SE is the delta-method SE of the full-panel fit.
    """
    if spec.intercept_mode != "individual":
        raise UnsupportedModelSpec("the jackknife is defined for individual intercepts")
    if data.n_periods < 4:
        raise PanelTooShort("half-panel split needs at least 4 estimation periods")
    full_fit = fit_model(data, spec)
    if not full_fit.converged:
        raise NotConverged("full-panel fit did not converge")
    full_ape = plug_in_ape(full_fit, data, covariate, discrete=discrete)
    halves = []
    for labels in _half_period_labels(data.time_ids):
        sub = restrict_periods(data, labels)
        sub_fit = fit_model(sub, spec)
        if not sub_fit.converged:
            raise NotConverged("half-panel fit did not converge")
        halves.append(plug_in_ape(sub_fit, sub, covariate, discrete=discrete).value)
    return ApeEstimate(
        covariate=full_ape.covariate,
        value=jackknife_combine(full_ape.value, *halves),
        se=full_ape.se,
        n_units_used=full_ape.n_units_used,
        method="jackknife",
    )
