"""Variational M-step: closed-form block updates of B, H, mu and lambda."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .core import Dataset, DegenerateError, ModelParams, VariationalParams


@dataclass(frozen=True, eq=False)
class EffectiveResponse:
    xbar: np.ndarray
    sigma2_full: np.ndarray


def effective_response(ds: Dataset, varparams: VariationalParams) -> EffectiveResponse:
    """Offset-corrected response: observed value for continuous columns,
    posterior mean for count/binomial columns."""
    xbar = np.array(ds.X, dtype=float)
    s2 = np.zeros_like(xbar)
    if ds.latent.size:
        xbar[:, ds.latent] = varparams.tau
        s2[:, ds.latent] = varparams.sigma2
    xbar -= ds.offsets[:, None]
    return EffectiveResponse(xbar, s2)


def _spd_solve(A, rhs, what):
    try:
        c = cho_factor(A, lower=True, check_finite=True)
    except (LinAlgError, ValueError) as exc:
        raise DegenerateError(what) from exc
    return cho_solve(c, rhs)


def update_loadings(H, xbar, mu):
    """b_j = (H'H)^{-1} sum_i h_i (xbar_ij - mu_j), all columns at once."""
    H = np.asarray(H)
    rhs = H.T @ (xbar - mu[None, :])  # q x p
    return _spd_solve(H.T @ H, rhs, "degenerate factor scores").T


def update_factors(B, lam, xbar, mu):
    """h_i = (B' L^{-1} B)^{-1} sum_j b_j (xbar_ij - mu_j) / lam_j."""
    Bw = B / lam[:, None]
    rhs = Bw.T @ (xbar - mu[None, :]).T  # q x n
    return _spd_solve(B.T @ Bw, rhs, "degenerate loadings").T


def update_intercepts(B, H, xbar):
    return (xbar - H @ B.T).mean(axis=0)


def update_variances(B, H, mu, xbar, sigma2_full, lambda_floor: float = 1e-8):
    resid = xbar - H @ B.T - mu[None, :]
    lam = (resid ** 2 + sigma2_full).mean(axis=0)
    return np.maximum(lam, lambda_floor)


def m_step(ds: Dataset, params: ModelParams, varparams: VariationalParams, lambda_floor: float = 1e-8) -> ModelParams:
    """One Gauss-Seidel sweep B -> H -> mu -> lambda, each block using the
    freshest values of the others."""
    er = effective_response(ds, varparams)
    B = update_loadings(params.H, er.xbar, params.mu)
    H = update_factors(B, params.lam, er.xbar, params.mu)
    mu = update_intercepts(B, H, er.xbar)
    lam = update_variances(B, H, mu, er.xbar, er.sigma2_full, lambda_floor)
    return ModelParams(B=B, mu=mu, H=H, lam=lam)
