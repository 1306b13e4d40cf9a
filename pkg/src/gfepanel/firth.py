"""Jeffreys-penalized (Firth) logit with individual intercepts.

Maximizes ell(theta) + 0.5*log det I(theta) over slopes and every unit
intercept, which keeps all estimates finite even for units whose outcome
never varies, so no observation is ever dropped. The modified-score
iteration works on hat-value adjusted responses y + h*(1/2 - p); the
arrowhead structure of the information matrix (dense slope block, diagonal
intercept block) gives the leverages, the log-determinant, and the Newton
step without ever factorizing an N x N matrix.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg

from .errors import CollinearDesign, UnsupportedModelSpec
from .mle import MAX_HALVINGS, FitResult, ModelSpec, _arrowhead, _start_alpha
from .panel import PanelDataset, SeparationReport
from . import links


def _blocks(w, X, lvl, n_levels):
    a_block, b_block, d_block = _arrowhead(w, X, lvl, n_levels)
    d_block = np.maximum(d_block, 1e-300)
    ratio = b_block / d_block[:, None]          # (L, J)
    j = X.shape[2]
    if j:
        s_block = a_block - ratio.T @ b_block
        try:
            chol = linalg.cho_factor(s_block)
        except linalg.LinAlgError as exc:
            raise CollinearDesign("penalized information is singular") from exc
        logdet = 2.0 * np.log(np.diag(chol[0])).sum() + np.log(d_block).sum()
        v_bb = linalg.cho_solve(chol, np.eye(j))
    else:
        chol = None
        logdet = np.log(d_block).sum()
        v_bb = np.zeros((0, 0))
    return b_block, d_block, ratio, chol, logdet, v_bb


def _leverages(w, X, lvl, ratio, v_bb, d_block):
    """Diagonal of the hat matrix of the weighted (slopes + dummies) design."""
    j = X.shape[2]
    d_inv = 1.0 / d_block
    if j:
        c = ratio @ v_bb                                  # (L, J)
        quad_bb = np.einsum("ntj,jk,ntk->nt", X, v_bb, X)
        cross = np.einsum("ntj,nj->nt", X, c[lvl])
        v_aa_diag = d_inv + np.einsum("lj,lj->l", ratio, c)
        return w * (quad_bb - 2.0 * cross + v_aa_diag[lvl][:, None])
    return w * d_inv[lvl][:, None]


def fit_firth(data: PanelDataset, spec: ModelSpec, max_iter=100,
              tol=1e-8) -> FitResult:
    """Penalized ML fit; every unit keeps a finite intercept.

    Only the static logit model is supported: the score correction is
    derived for the logit likelihood, and its dynamic extension would need
    a different correction term.
    """
    if spec.link != "logit":
        raise UnsupportedModelSpec("the penalized fit is derived for the logit link")
    if spec.intercept_mode != "individual":
        raise UnsupportedModelSpec("the penalized fit uses individual intercepts")
    if spec.dynamic:
        raise UnsupportedModelSpec(
            "the penalized fit supports static designs only; the dynamic "
            "model would need a modified correction term"
        )
    n, t, j = data.n_units, data.n_periods, data.n_covariates
    y, X = data.y, data.X
    lvl = np.arange(n)

    beta = np.zeros(j)
    alpha = _start_alpha(y, lvl, n, "logit")

    def penalized(beta_v, alpha_v):
        eta = X @ beta_v + alpha_v[:, None]
        p = links.link_cdf(eta, "logit")
        ll = float(
            (y * links.log_cdf(eta, "logit") + (1 - y) * links.log_sf(eta, "logit")).sum()
        )
        w = p * (1.0 - p)
        return eta, p, ll, w

    eta, p, ll, w = penalized(beta, alpha)
    blocks = _blocks(w, X, lvl, n)
    pen_ll = ll + 0.5 * blocks[4]
    iterations = 0
    converged = False
    grad_norm = np.inf
    trace = [pen_ll]

    for iterations in range(1, max_iter + 1):
        b_block, d_block, ratio, chol, logdet, v_bb = blocks
        h = _leverages(w, X, lvl, ratio, v_bb, d_block)
        resid = y - p + h * (0.5 - p)
        u_beta = np.einsum("nt,ntj->j", resid, X) if j else np.zeros(0)
        u_alpha = resid.sum(axis=1)
        grad_norm = max(
            np.abs(u_beta).max() if j else 0.0, np.abs(u_alpha).max()
        )
        if grad_norm < tol * (1.0 + abs(pen_ll)):
            converged = True
            break
        # Newton step on the arrowhead information
        if j:
            step_beta = linalg.cho_solve(chol, u_beta - ratio.T @ u_alpha)
        else:
            step_beta = np.zeros(0)
        step_alpha = (u_alpha - b_block @ step_beta) / d_block
        accepted = False
        for _ in range(MAX_HALVINGS):
            beta_new = beta + step_beta
            alpha_new = alpha + step_alpha
            eta_n, p_n, ll_n, w_n = penalized(beta_new, alpha_new)
            try:
                blocks_n = _blocks(w_n, X, lvl, n)
            except CollinearDesign:
                step_beta, step_alpha = 0.5 * step_beta, 0.5 * step_alpha
                continue
            pen_new = ll_n + 0.5 * blocks_n[4]
            if pen_new >= pen_ll - 1e-12 * (1.0 + abs(pen_ll)):
                accepted = True
                break
            step_beta, step_alpha = 0.5 * step_beta, 0.5 * step_alpha
        if not accepted:
            break
        beta, alpha = beta_new, alpha_new
        eta, p, ll, w = eta_n, p_n, ll_n, w_n
        blocks = blocks_n
        pen_ll = pen_new
        trace.append(pen_ll)

    b_block, d_block, ratio, chol, logdet, v_bb = blocks
    if j:
        v_ba = -v_bb @ ratio.T
        v_aa = np.diag(1.0 / d_block) + ratio @ v_bb @ ratio.T
        vcov = np.vstack(
            [np.hstack([v_bb, v_ba]), np.hstack([v_ba.T, v_aa])]
        )
    else:
        vcov = np.diag(1.0 / d_block)

    sep = SeparationReport(frozenset(), n, 0.0)
    return FitResult(
        beta=beta,
        intercepts={data.unit_ids[i]: float(alpha[i]) for i in range(n)},
        loglik=pen_ll,
        vcov=vcov,
        dropped_units=sep,
        iterations=iterations,
        converged=bool(converged),
        gradient_norm=float(grad_norm),
        spec=spec,
        level_labels=tuple(data.unit_ids),
        kept_units=np.arange(n),
        level_of_unit=lvl,
        alpha_by_unit=alpha.copy(),
        trace=tuple(trace),
        penalized=True,
    )
