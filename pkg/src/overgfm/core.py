"""Domain types and validation shared by every part of the OverGFM fitter.

Columns are addressed by their schema position. Continuous columns form the
first group, count columns the second and binomial columns the third; the
variational matrices (``tau``, ``sigma2``) only carry the count and binomial
columns, in schema order.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class OverGFMError(ValueError):
    """Base class for errors raised by this package."""


class SchemaError(OverGFMError):
    pass


class DataError(OverGFMError):
    pass


class DegenerateError(OverGFMError):
    """A linear system that should be positive definite is not."""


class Kind(str, enum.Enum):
    CONTINUOUS = "continuous"
    COUNT = "count"
    BINOMIAL = "binomial"


@dataclass(frozen=True)
class Column:
    name: str
    kind: Kind
    trials: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.kind is Kind.BINOMIAL:
            if self.trials is None:
                object.__setattr__(self, "trials", 1)
            if int(self.trials) != self.trials or self.trials < 1:
                raise SchemaError(f"column {self.name!r}: trials must be a positive integer")
            object.__setattr__(self, "trials", int(self.trials))
        elif self.trials is not None:
            raise SchemaError(f"column {self.name!r}: trials only apply to binomial columns")


@dataclass(frozen=True)
class VariableSchema:
    columns: tuple

    def __init__(self, columns: Sequence):
        cols = []
        for c in columns:
            if isinstance(c, Column):
                cols.append(c)
            elif isinstance(c, (tuple, list)):
                cols.append(Column(*c))
            else:
                raise SchemaError(f"cannot interpret schema entry {c!r}")
        names = [c.name for c in cols]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate column names in schema")
        object.__setattr__(self, "columns", tuple(cols))

    @classmethod
    def from_kinds(cls, kinds: Sequence, trials=None, prefix: str = "V") -> "VariableSchema":
        """Build a schema with generated names ``V1, V2, ...``.

        ``trials`` may be a scalar applied to every binomial column, or a
        sequence aligned with ``kinds`` (ignored on non-binomial entries).
        """
        cols = []
        for j, k in enumerate(kinds):
            k = Kind(k)
            t = None
            if k is Kind.BINOMIAL:
                if trials is None:
                    t = 1
                elif np.isscalar(trials):
                    t = int(trials)
                else:
                    t = int(trials[j])
            cols.append(Column(f"{prefix}{j + 1}", k, t))
        return cls(cols)

    @property
    def p(self) -> int:
        return len(self.columns)

    @property
    def names(self) -> list:
        return [c.name for c in self.columns]

    @property
    def kinds(self) -> list:
        return [c.kind for c in self.columns]

    def indices(self, kind) -> np.ndarray:
        kind = Kind(kind)
        return np.array([j for j, c in enumerate(self.columns) if c.kind is kind], dtype=np.intp)

    @property
    def trials(self) -> np.ndarray:
        """Length-p trial counts, 0 on non-binomial columns."""
        return np.array([c.trials if c.kind is Kind.BINOMIAL else 0 for c in self.columns], dtype=np.int64)


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MixedDataMatrix:
    X: np.ndarray
    offsets: Optional[np.ndarray] = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            raise DataError(f"X must be a 2-d matrix, got shape {X.shape}")
        object.__setattr__(self, "X", _frozen(X))
        offs = np.zeros(X.shape[0]) if self.offsets is None else np.asarray(self.offsets, dtype=float)
        if offs.shape != (X.shape[0],):
            raise DataError(f"offsets must have length n={X.shape[0]}, got shape {offs.shape}")
        object.__setattr__(self, "offsets", _frozen(offs))

    @property
    def shape(self):
        return self.X.shape


@dataclass(frozen=True, eq=False)
class Dataset:
    """A validated data matrix together with its schema and index sets."""

    X: np.ndarray
    offsets: np.ndarray
    schema: VariableSchema
    continuous: np.ndarray
    count: np.ndarray
    binomial: np.ndarray
    latent: np.ndarray  # count and binomial columns, schema order
    trials: np.ndarray

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def data(self) -> MixedDataMatrix:
        return MixedDataMatrix(self.X, self.offsets)

    def latent_positions(self, cols: np.ndarray) -> np.ndarray:
        """Positions of schema columns ``cols`` inside the variational matrices."""
        return np.searchsorted(self.latent, cols)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.schema == other.schema
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.offsets, other.offsets)
        )

    __hash__ = None


def validate(data, schema: VariableSchema = None) -> Dataset:
    """Check ``data`` against ``schema`` and materialise the column groups.

    ``data`` may be a :class:`MixedDataMatrix`, a bare array, or an already
    validated :class:`Dataset` (in which case ``schema`` may be omitted).
    """
    if isinstance(data, Dataset):
        schema = data.schema if schema is None else schema
        data = data.data
    elif not isinstance(data, MixedDataMatrix):
        data = MixedDataMatrix(data)
    if schema is None:
        raise SchemaError("a schema is required")
    X = data.X
    n, p = X.shape
    if schema.p != p:
        raise DataError(f"dimension mismatch: schema has {schema.p} columns, data has {p}")
    if n < 2 or p < 1:
        raise DataError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
    if not np.all(np.isfinite(X)):
        i, j = np.argwhere(~np.isfinite(X))[0]
        raise DataError(f"non-finite value at row {i}, column {schema.names[j]!r}")
    if not np.all(np.isfinite(data.offsets)):
        raise DataError("non-finite offset")

    count = schema.indices(Kind.COUNT)
    binom = schema.indices(Kind.BINOMIAL)
    trials = schema.trials
    if count.size:
        xc = X[:, count]
        bad = (xc != np.round(xc)) | (xc < 0)
        if bad.any():
            i, k = np.argwhere(bad)[0]
            raise DataError(
                f"non-integer count at row {i}, column {schema.names[count[k]]!r}: {xc[i, k]!r}"
            )
    if binom.size:
        xb = X[:, binom]
        if ((xb != np.round(xb)) | (xb < 0)).any():
            i, k = np.argwhere((xb != np.round(xb)) | (xb < 0))[0]
            raise DataError(
                f"binomial entry must be an integer >= 0 at row {i}, column {schema.names[binom[k]]!r}"
            )
        over = xb > trials[binom][None, :]
        if over.any():
            i, k = np.argwhere(over)[0]
            raise DataError(
                f"entry {xb[i, k]!r} exceeds trials n_j={trials[binom[k]]} "
                f"at row {i}, column {schema.names[binom[k]]!r}"
            )
    latent = np.sort(np.concatenate([count, binom])).astype(np.intp)
    return Dataset(
        X=data.X,
        offsets=data.offsets,
        schema=schema,
        continuous=schema.indices(Kind.CONTINUOUS),
        count=count,
        binomial=binom,
        latent=latent,
        trials=trials,
    )


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Loadings ``B`` (p x q), intercepts ``mu`` (p), scores ``H`` (n x q) and
    dispersion variances ``lam`` (p)."""

    B: np.ndarray
    mu: np.ndarray
    H: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        for name in ("B", "mu", "H", "lam"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if self.B.ndim != 2 or self.H.ndim != 2 or self.B.shape[1] != self.H.shape[1]:
            raise OverGFMError(f"incompatible shapes B{self.B.shape}, H{self.H.shape}")
        if self.mu.shape != (self.B.shape[0],) or self.lam.shape != (self.B.shape[0],):
            raise OverGFMError("mu and lam must have length p")

    @property
    def q(self) -> int:
        return self.B.shape[1]

    def linear_predictor(self, offsets=None) -> np.ndarray:
        Z = self.H @ self.B.T + self.mu[None, :]
        if offsets is not None:
            Z = Z + np.asarray(offsets)[:, None]
        return Z

    def replace(self, **kw) -> "ModelParams":
        d = dict(B=self.B, mu=self.mu, H=self.H, lam=self.lam)
        d.update(kw)
        return ModelParams(**d)


@dataclass(frozen=True, eq=False)
class VariationalParams:
    """Posterior means and variances for the count and binomial sites."""

    tau: np.ndarray
    sigma2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "tau", _frozen(self.tau))
        object.__setattr__(self, "sigma2", _frozen(self.sigma2))
        if self.tau.shape != self.sigma2.shape:
            raise OverGFMError("tau and sigma2 must share a shape")
        if self.sigma2.size and not (np.all(self.sigma2 > 0) and np.all(np.isfinite(self.sigma2))):
            raise OverGFMError("sigma2 must be strictly positive and finite")


@dataclass(frozen=True)
class FitConfig:
    q: int
    max_iter: int = 100
    eps_elbo: float = 1e-4
    lambda_floor: float = 1e-8
    exp_clamp: float = 80.0
    seed: Optional[int] = None
    n_restarts: int = 0
    threads: int = 1
    safeguard: bool = True

    def __post_init__(self):
        if int(self.q) != self.q or self.q < 1:
            raise OverGFMError("q must be a positive integer")
        if self.max_iter < 1:
            raise OverGFMError("max_iter must be positive")
        if not self.eps_elbo > 0:
            raise OverGFMError("eps_elbo must be positive")
        if not self.lambda_floor > 0:
            raise OverGFMError("lambda_floor must be positive")
        if self.threads < 1:
            raise OverGFMError("threads must be >= 1")

    def check_dims(self, n: int, p: int):
        if self.q >= min(n, p):
            raise OverGFMError(f"q={self.q} must be smaller than min(n, p)={min(n, p)}")


@dataclass(frozen=True, eq=False)
class FitResult:
    params: ModelParams
    varparams: VariationalParams
    elbo_trace: tuple
    iterations: int
    converged: bool
    overflow_events: int = 0
    diagnostics: dict = field(default_factory=dict)

    @property
    def elbo(self) -> float:
        return self.elbo_trace[-1]
