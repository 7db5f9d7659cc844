"""Seeded data generators for the simulation designs.

Random streams: ``np.random.SeedSequence(seed).spawn(5)`` gives independent
PCG64 streams, in order, for the loadings, the factor scores, the
intercepts, the overdispersion noise and the emission draws. Changing one
part of a design therefore never shifts the draws of another.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit

from ._linalg import fix_signs
from .core import Kind, MixedDataMatrix, OverGFMError, VariableSchema

POISSON_MEAN_LIMIT = 1e12

_STREAMS = ("loadings", "scores", "intercepts", "noise", "emission")


@dataclass(frozen=True)
class SimSpec:
    n: int
    p: int
    q: int
    type_mix: tuple  # ((kind, count), ...) in column order
    rho: dict  # kind -> signal strength
    sigma2: float = 0.0
    noise: str = "gaussian"  # "gaussian" or "t"
    df: float = 1.0
    mu_scale: float = 0.4
    trials: int = 1
    seed: int = 0

    def __post_init__(self):
        mix = tuple((Kind(k), int(c)) for k, c in self.type_mix)
        object.__setattr__(self, "type_mix", mix)
        object.__setattr__(self, "rho", {Kind(k): float(v) for k, v in self.rho.items()})
        if sum(c for _, c in mix) != self.p:
            raise OverGFMError(f"type counts sum to {sum(c for _, c in mix)}, expected p={self.p}")
        for k, c in mix:
            if c and not self.rho.get(k, 0) > 0:
                raise OverGFMError(f"signal strength for {k.value} must be positive")
        if self.sigma2 < 0:
            raise OverGFMError("sigma2 must be nonnegative")
        if self.noise not in ("gaussian", "t"):
            raise OverGFMError(f"unknown noise kind {self.noise!r}")
        if self.q >= min(self.n, self.p):
            raise OverGFMError("q must be smaller than min(n, p)")

    @property
    def kinds(self) -> list:
        return [k for k, c in self.type_mix for _ in range(c)]


@dataclass(frozen=True, eq=False)
class SimulatedDataset:
    data: MixedDataMatrix
    schema: VariableSchema
    H0: np.ndarray
    B0: np.ndarray
    mu0: np.ndarray
    Y0: np.ndarray
    spec: Optional[SimSpec] = field(default=None)


def thirds(p: int) -> tuple:
    """Continuous/count/binary split floor(p/3), floor(p/3), remainder."""
    k = p // 3
    return ((Kind.CONTINUOUS, k), (Kind.COUNT, k), (Kind.BINOMIAL, p - 2 * k))


def ar1_cov(q: int, r: float = 0.5) -> np.ndarray:
    idx = np.arange(q)
    return r ** np.abs(idx[:, None] - idx[None, :])


def _orthonormal_columns(M):
    Q, R = np.linalg.qr(M)
    # make the factorisation unique: positive diagonal of R
    s = np.sign(np.diag(R))
    s[s == 0] = 1
    return Q * s[None, :]


def generate_dataset(spec: SimSpec) -> SimulatedDataset:
    n, p, q = spec.n, spec.p, spec.q
    rngs = dict(zip(_STREAMS, (np.random.default_rng(s) for s in np.random.SeedSequence(spec.seed).spawn(5))))
    kinds = spec.kinds

    scale = np.array([spec.rho.get(k, 0.0) for k in kinds])
    B_bar = rngs["loadings"].standard_normal((p, q)) * scale[:, None]
    U2, d2, V2t = np.linalg.svd(B_bar, full_matrices=False)
    B0 = U2 * d2[None, :]

    H_breve = rngs["scores"].multivariate_normal(np.zeros(q), ar1_cov(q), size=n, method="cholesky")
    H_bar = _orthonormal_columns(H_breve - H_breve.mean(axis=0))
    # H0 B0' = sqrt(n) H_bar B_bar'
    H0 = np.sqrt(n) * H_bar @ V2t.T
    H0, B0 = fix_signs(H0, B0)

    mu0 = spec.mu_scale * rngs["intercepts"].standard_normal(p)

    noise_rng = rngs["noise"]
    if spec.sigma2 == 0:
        eps = np.zeros((n, p))
    elif spec.noise == "gaussian":
        eps = np.sqrt(spec.sigma2) * noise_rng.standard_normal((n, p))
    else:
        # multivariate t rows: N(0, sigma2 I) / sqrt(chi2_df / df), shared per row
        z = noise_rng.standard_normal((n, p))
        w = noise_rng.chisquare(spec.df, size=n)
        eps = np.sqrt(spec.sigma2) * z / np.sqrt(w / spec.df)[:, None]

    offsets = np.zeros(n)
    Y0 = offsets[:, None] + H0 @ B0.T + mu0[None, :] + eps

    X = np.empty((n, p))
    kind_arr = np.array([k.value for k in kinds])
    em = rngs["emission"]
    cont = kind_arr == Kind.CONTINUOUS.value
    cnt = kind_arr == Kind.COUNT.value
    bin_ = kind_arr == Kind.BINOMIAL.value
    X[:, cont] = Y0[:, cont]
    if cnt.any():
        Yc = Y0[:, cnt]
        too_big = Yc > np.log(POISSON_MEAN_LIMIT)
        if too_big.any():
            i, k = np.argwhere(too_big)[0]
            j = np.flatnonzero(cnt)[k]
            raise OverGFMError(
                f"Poisson mean exp({Yc[i, k]:.3g}) exceeds {POISSON_MEAN_LIMIT:.0e} at ({i}, {j}); "
                "use a smaller signal strength for count columns"
            )
        X[:, cnt] = em.poisson(np.exp(Yc))
    if bin_.any():
        X[:, bin_] = em.binomial(spec.trials, expit(Y0[:, bin_]))

    schema = VariableSchema.from_kinds(kinds, trials=spec.trials)
    return SimulatedDataset(
        data=MixedDataMatrix(X, offsets),
        schema=schema,
        H0=H0,
        B0=B0,
        mu0=mu0,
        Y0=Y0,
        spec=spec,
    )


def vmr(column) -> float:
    """Variance-to-mean ratio (sample variance with ddof=1 over the mean)."""
    x = np.asarray(column, dtype=float)
    m = x.mean()
    if m == 0:
        raise ValueError("variance-to-mean ratio is undefined for a zero-mean column")
    return float(x.var(ddof=1) / m)


# -- named designs ---------------------------------------------------------

SCENARIO1_RHO = {Kind.CONTINUOUS: 0.05, Kind.COUNT: 0.2, Kind.BINOMIAL: 0.1}


def scenario1(sigma2=0.5, n=500, p=500, q=6, seed=0, c=1.0, noise="gaussian", df=1.0, rho=None) -> SimSpec:
    """Three-type mix with the base signal strengths scaled by ``c``.

    Scenarios 2 and 3 are this design with other (n, p) or ``c``; scenario 4
    case 1 is this design at (300, 300).
    """
    rho = dict(SCENARIO1_RHO if rho is None else rho)
    rho = {k: c * v for k, v in rho.items()}
    return SimSpec(n=n, p=p, q=q, type_mix=thirds(p), rho=rho, sigma2=sigma2, noise=noise, df=df, seed=seed)


def heavy_tail(sigma2=0.3, n=500, p=500, q=6, seed=0, df=1.0) -> SimSpec:
    """Three-type mix with multivariate-t overdispersion."""
    rho = {Kind.CONTINUOUS: 4.0, Kind.COUNT: 0.8, Kind.BINOMIAL: 2.4}
    return scenario1(sigma2=sigma2, n=n, p=p, q=q, seed=seed, noise="t", df=df, rho=rho)


# two-type and single-type designs; signal strengths per kind
SCENARIO7_CASES = {
    "normal+poisson": {Kind.CONTINUOUS: 0.3, Kind.COUNT: 0.4},
    "normal+binary": {Kind.CONTINUOUS: 0.6, Kind.BINOMIAL: 0.1},
    "poisson+binary": {Kind.COUNT: 0.1, Kind.BINOMIAL: 0.5},
    "normal": {Kind.CONTINUOUS: 0.3},
    "poisson": {Kind.COUNT: 0.6},
    "binary": {Kind.BINOMIAL: 0.6},
}


def _split(p, kinds):
    if len(kinds) == 1:
        return ((kinds[0], p),)
    k = p // 2
    return ((kinds[0], k), (kinds[1], p - k))


def scenario7(case="poisson+binary", sigma2=1.0, n=300, p=300, q=6, seed=0) -> SimSpec:
    rho = SCENARIO7_CASES[case]
    kinds = [k for k in (Kind.CONTINUOUS, Kind.COUNT, Kind.BINOMIAL) if k in rho]
    return SimSpec(n=n, p=p, q=q, type_mix=_split(p, kinds), rho=rho, sigma2=sigma2, seed=seed)


def scenario8(case="gaussian", sigma2=0.0, n=300, p=300, q=6, seed=0, rho=None) -> SimSpec:
    """Single-type Gaussian (rho=0.2) or Poisson (rho=0.3) design."""
    if case == "gaussian":
        kind, default = Kind.CONTINUOUS, 0.2
    elif case == "poisson":
        kind, default = Kind.COUNT, 0.3
    else:
        raise OverGFMError(f"unknown scenario-8 case {case!r}")
    return SimSpec(
        n=n, p=p, q=q, type_mix=((kind, p),), rho={kind: default if rho is None else rho},
        sigma2=sigma2, seed=seed,
    )
