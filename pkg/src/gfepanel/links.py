"""Logit and probit link functions with stable log-probabilities."""

from __future__ import annotations

import numpy as np
from scipy import special
from scipy.stats import norm

LINKS = ("logit", "probit")


def _check(link: str) -> str:
    if link not in LINKS:
        raise ValueError(f"unknown link {link!r}; expected one of {LINKS}")
    return link


def link_cdf(z, link="logit"):
    """F(z): response probability at index z. Overflow-safe."""
    _check(link)
    if link == "logit":
        return special.expit(z)
    return norm.cdf(z)


def link_pdf(z, link="logit"):
    """F'(z): density of the error distribution at z."""
    _check(link)
    if link == "logit":
        p = special.expit(z)
        return p * (1.0 - p)
    return norm.pdf(z)


def link_pdf_deriv(z, link="logit"):
    """F''(z): curvature, needed by delta-method Jacobians."""
    _check(link)
    if link == "logit":
        p = special.expit(z)
        return p * (1.0 - p) * (1.0 - 2.0 * p)
    return -np.asarray(z) * norm.pdf(z)


def log_cdf(z, link="logit"):
    """log F(z) without underflow in the deep tail."""
    _check(link)
    if link == "logit":
        return special.log_expit(z)
    return norm.logcdf(z)


def log_sf(z, link="logit"):
    """log(1 - F(z)) without underflow in the deep tail."""
    _check(link)
    if link == "logit":
        return special.log_expit(-np.asarray(z))
    return norm.logcdf(-np.asarray(z))
