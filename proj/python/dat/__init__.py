"""Dual adversarial training: robust classifiers that double as energy-based generators."""

from ._core import (
    ContractViolation,
    DomainError,
    Network,
    TrainingDivergence,
    conditional_probs,
    config_text,
    ece,
    evaluate,
    fid,
    inception_score,
    joint_energy,
    load_dataset,
    load_model,
    logsumexp,
    marginal_energy,
    ood_auroc,
    train,
    verify,
)

__all__ = [
    "ContractViolation",
    "DomainError",
    "Network",
    "TrainingDivergence",
    "conditional_probs",
    "config_text",
    "ece",
    "evaluate",
    "fid",
    "inception_score",
    "joint_energy",
    "load_dataset",
    "load_model",
    "logsumexp",
    "marginal_energy",
    "ood_auroc",
    "train",
    "verify",
]
