"""Desk-scale end-to-end harness for background robustness experiments."""

from .experiment import (
    CONDITIONS,
    PUBLISHED_SEEDS,
    ExperimentConfig,
    TrainConfig,
    TrainState,
    demo_train_config,
    evaluate,
    format_report,
    run_experiment,
    train,
    train_step,
    write_report,
)
from .model import ModelShape, forward_student, init_params, loss_and_grads
from .optim import AdamState, adam_step, cosine_lr
from .synth import SynthConfig, gen_synthetic_dataset

__all__ = [
    "AdamState",
    "CONDITIONS",
    "PUBLISHED_SEEDS",
    "ExperimentConfig",
    "ModelShape",
    "SynthConfig",
    "TrainConfig",
    "TrainState",
    "adam_step",
    "cosine_lr",
    "demo_train_config",
    "evaluate",
    "format_report",
    "forward_student",
    "gen_synthetic_dataset",
    "init_params",
    "loss_and_grads",
    "run_experiment",
    "train",
    "train_step",
    "write_report",
]
