"""Number-of-factors selection by the largest ratio of consecutive singular
values of the fitted loading matrix."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FitConfig, OverGFMError, validate
from .driver import fit

DEFAULT_Q_MAX = 15


@dataclass(frozen=True)
class SvrReport:
    singular_values: tuple
    ratios: tuple  # nu_k / nu_{k+1}, k = 1..q_max-1; nan where undefined
    q_hat: int
    max_ratio: float


def singular_value_ratios(B, rtol: float = 1e-12) -> SvrReport:
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[1] < 2:
        raise OverGFMError("need a loading matrix with at least two columns")
    nu = np.linalg.svd(B, compute_uv=False)
    if nu[0] == 0:
        raise OverGFMError("zero loading matrix")
    num, den = nu[:-1], nu[1:]
    ok = den > rtol * nu[0]
    ratios = np.full(num.shape, np.nan)
    ratios[ok] = num[ok] / den[ok]
    if ok.any():
        k = int(np.nanargmax(ratios))  # first occurrence: smallest k on ties
        q_hat, max_ratio = k + 1, float(ratios[k])
    else:
        # only the leading singular value is numerically nonzero
        q_hat, max_ratio = 1, float("inf")
    return SvrReport(tuple(map(float, nu)), tuple(map(float, ratios)), q_hat, max_ratio)


def select_num_factors(data, schema=None, q_max: int = DEFAULT_Q_MAX, config: FitConfig = None, **kwargs) -> SvrReport:
    """Fit with ``q = q_max`` and pick the index of the largest singular-value ratio.

    ``config`` (or keyword arguments) supplies the remaining fit settings;
    its ``q`` is overridden by ``q_max``.
    """
    ds = validate(data, schema)
    if q_max < 2:
        raise OverGFMError("q_max must be at least 2")
    if config is None:
        config = FitConfig(q=q_max, **kwargs)
    else:
        config = FitConfig(**{**config.__dict__, "q": q_max})
    res = fit(ds, config=config)
    return singular_value_ratios(res.params.B)
