"""Variational E-step: one Laplace-Taylor update per count/binomial site.

Each update is a single Newton step on the site log posterior
``f(y) = log p(x | y) - (y - z)^2 / (2 lam)`` started at the previous
posterior mean, followed by the Laplace variance ``-1 / f''`` at the new mean.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.special import expit

from ._numerics import (
    OverflowCounter,
    binomial_site_elbo,
    clamped_exp,
    count_site_elbo,
    log1p_exp_neg,
)
from .core import Dataset, ModelParams, VariationalParams

MAX_HALVINGS = 10

__all__ = [
    "OverflowCounter",
    "binomial_site_update",
    "clamped_exp",
    "e_step",
    "log1p_exp_neg",
    "poisson_site_update",
    "sigmoid",
]


def sigmoid(y):
    return expit(y)


def poisson_site_update(x, y0, ztilde, lam, exp_clamp: float = 80.0, counter: OverflowCounter = None):
    """Closed-form count-site update. Broadcasts over array arguments.

    Returns ``(tau, sigma2)`` with
    ``tau = (x - e^{y0}(1 - y0) + ztilde/lam) / (1/lam + e^{y0})`` and
    ``sigma2 = 1 / (1/lam + e^{tau})``.
    """
    inv_lam = 1.0 / np.asarray(lam, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    e0 = clamped_exp(y0, exp_clamp, counter)
    tau = (x - e0 * (1.0 - y0) + inv_lam * ztilde) / (inv_lam + e0)
    sigma2 = 1.0 / (inv_lam + clamped_exp(tau, exp_clamp, counter))
    if tau.ndim == 0:
        return float(tau), float(sigma2)
    return tau, sigma2


def binomial_site_update(x, n_trials, y0, ztilde, lam):
    """Closed-form binomial-site update (second-order expansion of ln g3)."""
    inv_lam = 1.0 / np.asarray(lam, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    g0 = expit(y0)
    w0 = n_trials * g0 * (1.0 - g0)
    tau = (x - n_trials * g0 + w0 * y0 + inv_lam * ztilde) / (inv_lam + w0)
    g = expit(tau)
    sigma2 = 1.0 / (inv_lam + n_trials * g * (1.0 - g))
    if tau.ndim == 0:
        return float(tau), float(sigma2)
    return tau, sigma2


def _laplace_variance(tau, lam, nt, is_count, exp_clamp):
    if is_count:
        return 1.0 / (1.0 / lam + clamped_exp(tau, exp_clamp))
    g = expit(tau)
    return 1.0 / (1.0 / lam + nt * g * (1.0 - g))


def _update_rows(ds: Dataset, params: ModelParams, varparams, rows, exp_clamp, counter, safeguard,
                 halvings: int = MAX_HALVINGS):
    X = ds.X[rows]
    a = ds.offsets[rows]
    H = params.H[rows]
    tau_prev = varparams.tau[rows]
    s2_prev = varparams.sigma2[rows]
    tau = np.empty_like(tau_prev)
    sigma2 = np.empty_like(tau)
    for cols, is_count in ((ds.count, True), (ds.binomial, False)):
        if not cols.size:
            continue
        pos = ds.latent_positions(cols)
        x = X[:, cols]
        z = a[:, None] + params.mu[cols][None, :] + H @ params.B[cols].T
        lam = params.lam[cols][None, :]
        nt = ds.trials[cols][None, :]
        t0, v0 = tau_prev[:, pos], s2_prev[:, pos]
        if is_count:
            t1, v1 = poisson_site_update(x, t0, z, lam, exp_clamp, counter)
        else:
            t1, v1 = binomial_site_update(x, nt, t0, z, lam)
        if safeguard:
            t1, v1 = _backtrack(x, nt, z, lam, t0, v0, t1, v1, is_count, exp_clamp, counter, halvings)
        tau[:, pos], sigma2[:, pos] = t1, v1
    return tau, sigma2


def _site_elbo(x, nt, z, lam, t, v, is_count, exp_clamp):
    if is_count:
        return count_site_elbo(x, t, v, z, lam, exp_clamp)
    return binomial_site_elbo(x, nt, t, v, z, lam)


def _backtrack(x, nt, z, lam, t0, v0, t1, v1, is_count, exp_clamp, counter, halvings):
    # Given the model parameters the ELBO is a sum of independent site terms.
    # Where the full step lowers a site's term, halve the step in tau (with the
    # Laplace variance at the shortened point); after `halvings` failures the
    # site keeps its previous values.
    bad = ~(_site_elbo(x, nt, z, lam, t1, v1, is_count, exp_clamp)
            >= _site_elbo(x, nt, z, lam, t0, v0, is_count, exp_clamp))
    if not bad.any():
        return t1, v1
    t1, v1 = t1.copy(), v1.copy()
    idx = np.nonzero(bad)
    xb, zb = x[idx], z[idx]
    lb = np.broadcast_to(lam, x.shape)[idx]
    nb = np.broadcast_to(nt, x.shape)[idx]
    tb0, vb0 = t0[idx], v0[idx]
    old = _site_elbo(xb, nb, zb, lb, tb0, vb0, is_count, exp_clamp)
    step = t1[idx] - tb0
    todo = np.ones(step.shape, dtype=bool)
    for _ in range(halvings):
        step = step * 0.5
        tt = tb0[todo] + step[todo]
        vt = _laplace_variance(tt, lb[todo], nb[todo], is_count, exp_clamp)
        ok = _site_elbo(xb[todo], nb[todo], zb[todo], lb[todo], tt, vt, is_count, exp_clamp) >= old[todo]
        where = np.flatnonzero(todo)[ok]
        t1[idx[0][where], idx[1][where]] = tt[ok]
        v1[idx[0][where], idx[1][where]] = vt[ok]
        todo[where] = False
        if not todo.any():
            break
    rest = np.flatnonzero(todo)
    if rest.size:
        t1[idx[0][rest], idx[1][rest]] = tb0[rest]
        v1[idx[0][rest], idx[1][rest]] = vb0[rest]
        if counter is not None:
            counter.rejected += int(rest.size)
    return t1, v1


def e_step(
    ds: Dataset,
    params: ModelParams,
    varparams: VariationalParams,
    exp_clamp: float = 80.0,
    counter: OverflowCounter = None,
    threads: int = 1,
    safeguard: bool = True,
) -> VariationalParams:
    """Update every count/binomial site once, expanding around the previous mean.

    Continuous columns carry no variational parameters. With ``safeguard``
    (the default) a site whose closed-form update would lower its ELBO term
    takes a halved step instead (up to ``MAX_HALVINGS`` times, then no step),
    which makes the E-step, and with it the whole iteration,
    ELBO-nondecreasing. Fixed points are those of the plain update. With
    ``threads > 1`` row blocks are processed concurrently; the result is
    identical to the serial path because sites do not interact.
    """
    if ds.latent.size == 0:
        return varparams
    n = ds.n
    if threads <= 1 or n < 2 * threads:
        tau, sigma2 = _update_rows(ds, params, varparams, slice(None), exp_clamp, counter, safeguard)
        return VariationalParams(tau, sigma2)

    bounds = np.linspace(0, n, threads + 1).astype(int)
    blocks = [slice(bounds[k], bounds[k + 1]) for k in range(threads)]
    counters = [OverflowCounter() for _ in blocks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(
            lambda bc: _update_rows(ds, params, varparams, bc[0], exp_clamp, bc[1], safeguard),
            zip(blocks, counters),
        ))
    if counter is not None:
        counter.add(sum(c.count for c in counters))
        counter.rejected += sum(c.rejected for c in counters)
    tau = np.vstack([t for t, _ in parts])
    sigma2 = np.vstack([s for _, s in parts])
    return VariationalParams(tau, sigma2)
