"""Adversarial sequence autoencoder for time-series generation, on a small numpy autodiff engine."""
from .checkpoint import checkpoint_load, checkpoint_save
from .config import DataSource, EvalConfig, RunConfig, TrainConfig
from .data import SeqDataset, SinesSpec, fit_normalizer, load_csv, slice_windows, synth_sines
from .errors import CheckpointError, ContractError, NonFiniteError, ShapeError
from .evaluation import (
    discriminative_score,
    distribution_report,
    dominant_component,
    predictive_score,
    sample_dataset,
    sample_near,
)
from .networks import count_parameters, encode, generate, init_models
from .objectives import fat_index, reconstruction_loss
from .training import train, train_baseline_tforcing

__version__ = "0.1.0"

__all__ = [
    "CheckpointError", "ContractError", "DataSource", "EvalConfig", "NonFiniteError", "RunConfig",
    "SeqDataset", "ShapeError", "SinesSpec", "TrainConfig", "checkpoint_load", "checkpoint_save",
    "count_parameters", "discriminative_score", "distribution_report", "dominant_component", "encode",
    "fat_index", "fit_normalizer", "generate", "init_models", "load_csv", "predictive_score",
    "reconstruction_loss", "sample_dataset", "sample_near", "slice_windows", "synth_sines", "train",
    "train_baseline_tforcing",
]
