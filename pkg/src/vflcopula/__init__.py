"""Gaussian-copula data privatization for vertical federated learning with
client-wise missingness, plus a federated sparse-GLM solver."""

from ._kernels import BACKEND
from .pipelines import PrivatizationConfig, SynthesisReport, run_evcds, run_ievcds, run_pipeline, run_vcds
from .types import (
    ClientPartition,
    CopulaModel,
    MixedDataset,
    PrivacyLedger,
    ValidationReport,
    VariableKind,
    split_by_client,
    validate_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ClientPartition",
    "CopulaModel",
    "MixedDataset",
    "PrivacyLedger",
    "PrivatizationConfig",
    "SynthesisReport",
    "ValidationReport",
    "VariableKind",
    "run_evcds",
    "run_ievcds",
    "run_pipeline",
    "run_vcds",
    "split_by_client",
    "validate_dataset",
    "__version__",
]
