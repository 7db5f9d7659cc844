"""Evidence lower bound, parameter-free constants dropped."""
from __future__ import annotations

import numpy as np

from ._numerics import (
    OverflowCounter,
    binomial_site_elbo,
    count_site_elbo,
    expected_log1p_exp_neg,  # noqa: F401  re-exported
)
from .core import Dataset, ModelParams, VariationalParams


def elbo_terms(
    ds: Dataset,
    params: ModelParams,
    varparams: VariationalParams,
    exp_clamp: float = 80.0,
    counter: OverflowCounter = None,
) -> np.ndarray:
    """Per-column ELBO contributions (length p); entropy is folded into the
    count/binomial columns it belongs to."""
    n, p = ds.X.shape
    lam = params.lam
    Z = params.linear_predictor(ds.offsets)
    out = np.zeros(p)

    c = ds.continuous
    if c.size:
        r = ds.X[:, c] - Z[:, c]
        out[c] = -0.5 * ((r ** 2).sum(axis=0) / lam[c] + n * np.log(lam[c]))

    for cols, is_count in ((ds.count, True), (ds.binomial, False)):
        if not cols.size:
            continue
        pos = ds.latent_positions(cols)
        tau = varparams.tau[:, pos]
        s2 = varparams.sigma2[:, pos]
        x = ds.X[:, cols]
        z, lam_c = Z[:, cols], lam[cols][None, :]
        if is_count:
            site = count_site_elbo(x, tau, s2, z, lam_c, exp_clamp, counter)
        else:
            site = binomial_site_elbo(x, ds.trials[cols][None, :], tau, s2, z, lam_c)
        out[cols] = site.sum(axis=0) - 0.5 * n * np.log(lam[cols])
    return out


def evaluate_elbo(
    ds: Dataset,
    params: ModelParams,
    varparams: VariationalParams,
    exp_clamp: float = 80.0,
    counter: OverflowCounter = None,
) -> float:
    # column-wise sums reduced in schema order: the result does not depend on threading
    terms = elbo_terms(ds, params, varparams, exp_clamp, counter)
    total = 0.0
    for t in terms:
        total += t
    return float(total)
