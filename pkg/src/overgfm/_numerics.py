"""Overflow-safe scalar kernels and per-site ELBO contributions."""
import numpy as np
from scipy.special import expit


class OverflowCounter:
    """Tally of clamped exponentials and of rejected site proposals."""

    def __init__(self):
        self.count = 0
        self.rejected = 0

    def add(self, k: int):
        self.count += int(k)


def clamped_exp(y, clamp: float = 80.0, counter: OverflowCounter = None):
    y = np.asarray(y, dtype=float)
    over = y > clamp
    if counter is not None and over.any():
        counter.add(np.count_nonzero(over))
    return np.exp(np.minimum(y, clamp))


def log1p_exp_neg(y):
    """ln(1 + e^{-y}) without overflow."""
    return np.logaddexp(0.0, -np.asarray(y, dtype=float))


def expected_log1p_exp_neg(tau, sigma2):
    """Second-order approximation of E ln(1 + e^{-y}) for y ~ N(tau, sigma2)."""
    g = expit(tau)
    return log1p_exp_neg(tau) + 0.5 * sigma2 * g * (1.0 - g)


def count_site_elbo(x, tau, sigma2, z, lam, exp_clamp=80.0, counter=None):
    """Site term of the ELBO for a count column, ln(lam) part excluded."""
    return (
        x * tau
        - clamped_exp(tau + 0.5 * sigma2, exp_clamp, counter)
        - 0.5 * ((tau - z) ** 2 + sigma2) / lam
        + 0.5 * np.log(sigma2)
    )


def binomial_site_elbo(x, n_trials, tau, sigma2, z, lam):
    """Site term of the ELBO for a binomial column, ln(lam) part excluded."""
    return (
        (x - n_trials) * tau
        - n_trials * expected_log1p_exp_neg(tau, sigma2)
        - 0.5 * ((tau - z) ** 2 + sigma2) / lam
        + 0.5 * np.log(sigma2)
    )
