"""Overdispersed generalized factor model for mixed-type data."""
from .core import (
    Column,
    DataError,
    Dataset,
    DegenerateError,
    FitConfig,
    FitResult,
    Kind,
    MixedDataMatrix,
    ModelParams,
    OverGFMError,
    SchemaError,
    VariableSchema,
    VariationalParams,
    validate,
)
from .driver import apply_identifiability, fit, initialize
from .elbo import evaluate_elbo
from .metrics import fit_lfm, trace_statistic, trace_statistic_upsilon
from .selectq import SvrReport, select_num_factors, singular_value_ratios
from .simulate import SimSpec, SimulatedDataset, generate_dataset, vmr

__version__ = "0.1.0"
