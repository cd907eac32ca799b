"""Structured GP damping identification with deterministic passivity guarantees."""

from .errors import (
    DampGpError,
    InfeasibilityError,
    InputError,
    NumericalError,
    ParseError,
    UnsupportedModelError,
)
from .kernels import DiagTorqueKernel, FullTorqueKernel, SeArdKernel, SeArdKernelBank
from .models import Dataset, FittedModel, PriorMean, fit, fit_prior_mean, predict_damping, predict_torque

__version__ = "0.1.0"

__all__ = [
    "DampGpError",
    "Dataset",
    "DiagTorqueKernel",
    "FittedModel",
    "FullTorqueKernel",
    "InfeasibilityError",
    "InputError",
    "NumericalError",
    "ParseError",
    "PriorMean",
    "SeArdKernel",
    "SeArdKernelBank",
    "UnsupportedModelError",
    "fit",
    "fit_prior_mean",
    "predict_damping",
    "predict_torque",
    "__version__",
]
