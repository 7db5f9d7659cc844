"""Initialisation, the variational EM loop and the identifiability projection."""
from __future__ import annotations

import logging
import time

import numpy as np

from ._linalg import factor_split, fix_signs, truncated_svd
from ._numerics import OverflowCounter
from .core import (
    Dataset,
    FitConfig,
    FitResult,
    ModelParams,
    OverGFMError,
    VariationalParams,
    validate,
)
from .elbo import evaluate_elbo
from .estep import e_step
from .mstep import m_step

log = logging.getLogger(__name__)


def surrogate_matrix(ds: Dataset) -> np.ndarray:
    """Raw values, with ln(1 + x) on count columns."""
    Xt = np.array(ds.X, dtype=float)
    if ds.count.size:
        Xt[:, ds.count] = np.log1p(Xt[:, ds.count])
    return Xt


def initialize(ds: Dataset, q: int):
    """Rank-q SVD start on the log-transformed surrogate matrix.

    Returns ``(ModelParams, VariationalParams)`` with unit dispersion
    variances and unit variational variances.
    """
    n, p = ds.X.shape
    if q >= min(n, p):
        raise OverGFMError(f"q={q} must be smaller than min(n, p)={min(n, p)}")
    Xt = surrogate_matrix(ds)
    mu0 = Xt.mean(axis=0)
    try:
        U, d, V = truncated_svd(Xt - mu0[None, :], q)
    except np.linalg.LinAlgError as exc:
        raise OverGFMError("SVD failed during initialisation") from exc
    H0, B0 = factor_split(U, d, V, n)
    H0, B0 = fix_signs(H0, B0)
    params = ModelParams(B=B0, mu=mu0, H=H0, lam=np.ones(p))
    tau0 = Xt[:, ds.latent]
    return params, VariationalParams(tau0, np.ones_like(tau0))


def apply_identifiability(params: ModelParams, rtol: float = 1e-12) -> ModelParams:
    """Rotate (H, B) into the canonical form without changing H B' + 1 mu'.

    Scores are centred (their mean is absorbed into ``mu``) and rescaled to
    H'H/n = I; B'B becomes diagonal with nonincreasing entries and each
    column of B starts with a positive entry.
    """
    H, B = params.H, params.B
    n, q = H.shape
    hbar = H.mean(axis=0)
    mu = params.mu + B @ hbar
    Hc = H - hbar[None, :]
    # SVD of the n x p product through two thin QRs: only q x q work is dense
    Qh, Rh = np.linalg.qr(Hc)
    Qb, Rb = np.linalg.qr(B)
    u, d, vt = np.linalg.svd(Rh @ Rb.T)
    if d[0] == 0 or d[-1] <= rtol * d[0]:
        raise OverGFMError("rank-deficient fit")
    H_new, B_new = factor_split(Qh @ u, d, Qb @ vt.T, n)
    H_new, B_new = fix_signs(H_new, B_new)
    return ModelParams(B=B_new, mu=mu, H=H_new, lam=params.lam)


def _relative_change(new, old):
    denom = abs(old)
    if denom == 0:
        return 0.0 if new == old else np.inf
    return abs(new - old) / denom


def run_vem(ds: Dataset, params: ModelParams, varparams: VariationalParams, config: FitConfig) -> FitResult:
    """Iterate E-step, M-step and ELBO evaluation from the given start.

    The returned parameters are *not* projected onto the identifiability
    conditions; :func:`fit` does that.
    """
    counter = OverflowCounter()
    t_start = time.perf_counter()
    elbo = evaluate_elbo(ds, params, varparams, config.exp_clamp, counter)
    trace = [elbo]
    converged = False
    t = 0
    for t in range(1, config.max_iter + 1):
        varparams = e_step(ds, params, varparams, config.exp_clamp, counter, config.threads, config.safeguard)
        params = m_step(ds, params, varparams, config.lambda_floor)
        elbo = evaluate_elbo(ds, params, varparams, config.exp_clamp, counter)
        trace.append(elbo)
        rel = _relative_change(trace[-1], trace[-2])
        log.debug("iter %d elbo %.10g rel %.3e", t, elbo, rel)
        if rel < config.eps_elbo:
            converged = True
            break
    loop_seconds = time.perf_counter() - t_start
    return FitResult(
        params=params,
        varparams=varparams,
        elbo_trace=tuple(trace),
        iterations=t,
        converged=converged,
        overflow_events=counter.count,
        diagnostics={
            "rejected_site_updates": counter.rejected,
            "loop_seconds": loop_seconds,
            "seconds_per_iter": loop_seconds / max(t, 1),
        },
    )


def fit(data, schema=None, config: FitConfig = None, **kwargs) -> FitResult:
    """Fit the overdispersed generalized factor model.

    ``data`` is a validated :class:`Dataset` or anything :func:`validate`
    accepts together with ``schema``. Either pass a :class:`FitConfig` or its
    fields as keyword arguments (``fit(ds, q=6)``).
    """
    if config is None:
        config = FitConfig(**kwargs)
    elif kwargs:
        raise TypeError("pass either config or keyword arguments, not both")
    ds = validate(data, schema)
    config.check_dims(ds.n, ds.p)

    start = time.perf_counter()
    params0, vp0 = initialize(ds, config.q)
    best = run_vem(ds, params0, vp0, config)
    if config.n_restarts:
        rng = np.random.default_rng(config.seed)
        for r in range(config.n_restarts):
            H = params0.H + rng.standard_normal(params0.H.shape) * 0.5
            res = run_vem(ds, params0.replace(H=H), vp0, config)
            log.debug("restart %d final elbo %.10g", r, res.elbo)
            if res.elbo > best.elbo:
                best = res
    params = apply_identifiability(best.params)
    diagnostics = dict(best.diagnostics)
    # seconds covers initialisation, restarts and projection; seconds_per_iter only the loop
    diagnostics["seconds"] = time.perf_counter() - start
    return FitResult(
        params=params,
        varparams=best.varparams,
        elbo_trace=best.elbo_trace,
        iterations=best.iterations,
        converged=best.converged,
        overflow_events=best.overflow_events,
        diagnostics=diagnostics,
    )
