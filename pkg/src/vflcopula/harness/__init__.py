from .experiment import ExperimentConfig, run_experiment, run_replication
from .generate import assemble_dataset, gen_response, generate_mixture, make_beta
from .metrics import classification_metrics, copula_kl, fit_copula, metrics
from .missing import Mar, Mcar, inject_missing

__all__ = [
    "ExperimentConfig",
    "Mar",
    "Mcar",
    "assemble_dataset",
    "classification_metrics",
    "copula_kl",
    "fit_copula",
    "gen_response",
    "generate_mixture",
    "inject_missing",
    "make_beta",
    "metrics",
    "run_experiment",
    "run_replication",
]
