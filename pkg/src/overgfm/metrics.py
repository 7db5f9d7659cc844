"""Column-space agreement statistics and the linear factor model baseline."""
from __future__ import annotations

import numpy as np

from ._linalg import factor_split, fix_signs, truncated_svd
from .core import OverGFMError


def trace_statistic(Ahat, A0, rtol: float = 1e-12) -> float:
    """Tr(A0' P A0) / Tr(A0' A0), P the projector onto span(Ahat).

    Lies in [0, 1]; equals 1 exactly when span(A0) is contained in span(Ahat).
    """
    Ahat = np.asarray(Ahat, dtype=float)
    A0 = np.asarray(A0, dtype=float)
    if Ahat.ndim == 1:
        Ahat = Ahat[:, None]
    if A0.ndim == 1:
        A0 = A0[:, None]
    if Ahat.shape[0] != A0.shape[0]:
        raise OverGFMError(f"row counts differ: {Ahat.shape[0]} vs {A0.shape[0]}")
    Q, R = np.linalg.qr(Ahat)
    rd = np.abs(np.diag(R))
    if rd.size == 0 or rd.min() <= rtol * max(rd.max(), np.finfo(float).tiny):
        raise OverGFMError("estimated matrix is rank deficient")
    denom = np.sum(A0 ** 2)
    if denom == 0:
        raise OverGFMError("reference matrix is zero")
    val = np.sum((Q.T @ A0) ** 2) / denom
    return float(min(max(val, 0.0), 1.0))


def trace_statistic_upsilon(Bhat, muhat, B0, mu0) -> float:
    """Trace statistic of the intercept-loading matrices [mu | B]."""
    U_hat = np.column_stack([np.asarray(muhat, float), np.asarray(Bhat, float)])
    U0 = np.column_stack([np.asarray(mu0, float), np.asarray(B0, float)])
    return trace_statistic(U_hat, U0)


def fit_lfm(X, q: int):
    """Principal-components fit of a linear factor model.

    Returns ``(H, B, mu)`` with H = sqrt(n) U and B = V D / sqrt(n) from the
    rank-q SVD of the column-centred data.
    """
    X = np.asarray(getattr(X, "X", X), dtype=float)
    n, p = X.shape
    if q >= min(n, p):
        raise OverGFMError(f"q={q} must be smaller than min(n, p)={min(n, p)}")
    mu = X.mean(axis=0)
    try:
        U, d, V = truncated_svd(X - mu[None, :], q)
    except np.linalg.LinAlgError as exc:
        raise OverGFMError("SVD failed") from exc
    H, B = factor_split(U, d, V, n)
    H, B = fix_signs(H, B)
    return H, B, mu
