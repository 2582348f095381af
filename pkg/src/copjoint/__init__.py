"""Copula-based joint discrete choice models (Copula-Logit and Copula-ResLogit)."""

from .copulas import (
    CopulaFamily,
    CopulaSpec,
    cdf,
    kendall_tau,
    partial_u,
    rectangle_mass,
    sample,
    sample_pair,
    validate_theta,
)
from .data import Dataset, SyntheticTruth, jenks_breaks, load_csv, simulate, split
from .estimation import FittedModel, TrainConfig, random_search, train
from .estimators import CopulaLogit, CopulaResLogit, JenksBreaks
from .evaluation import FitReport, aic, compare, mpe, report
from .exceptions import (
    ConsistencyError,
    CopjointError,
    DomainError,
    NumericalError,
    SchemaError,
    TrainingError,
)
from .model import BlockSpec, ModelSpec, joint_nll, theta_from_eta

__version__ = "0.1.0"

__all__ = [
    "BlockSpec",
    "ConsistencyError",
    "CopjointError",
    "CopulaFamily",
    "CopulaLogit",
    "CopulaResLogit",
    "CopulaSpec",
    "Dataset",
    "DomainError",
    "FitReport",
    "FittedModel",
    "JenksBreaks",
    "ModelSpec",
    "NumericalError",
    "SchemaError",
    "SyntheticTruth",
    "TrainConfig",
    "TrainingError",
    "aic",
    "cdf",
    "compare",
    "jenks_breaks",
    "joint_nll",
    "kendall_tau",
    "load_csv",
    "mpe",
    "partial_u",
    "rectangle_mass",
    "report",
    "sample",
    "sample_pair",
    "simulate",
    "split",
    "theta_from_eta",
    "train",
    "validate_theta",
]
