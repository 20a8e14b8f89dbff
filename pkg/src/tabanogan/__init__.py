"""GAN-based anomaly detection for tabular data.

A generator is trained on normal rows only (mode-specific Gaussian-mixture
encoding, noise-free hard Gumbel-softmax heads); a query row is scored by
optimizing a latent vector to reconstruct it and reporting the final MSE.
"""

from .autodiff import AdamState, DivergenceError, Node, Tape, adam_step, linear_forward, mse
from .bundle import ModelBundle, load_model, save_model
from .config import RunConfig, load_config, parse_config
from .evaluation import RocCurve, auc_pairwise, classification_metrics, knn_anomaly_scores, optimal_threshold, roc_curve
from .gan import GanModel, LossHistory, TrainConfig, discriminator_forward, generator_forward, sample, train_gan
from .gumbel import GumbelConfig, gumbel_softmax, hard_gumbel_softmax, sample_gumbel
from .inversion import AnomalyReport, InversionConfig, anomaly_score, invert_latent, score_batch
from .io import DatasetSchema, load_csv
from .pipeline import PipelineError, run_pipeline
from .preprocess import (
    Dataset,
    GmmColumnModel,
    MinMaxParams,
    PreprocessConfig,
    drop_columns,
    fit_encoder,
    fit_gmm_em,
    fit_minmax,
    mode_denormalize,
    mode_normalize,
    split_by_label,
)
from .synthetic import make_synthetic

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "DivergenceError",
    "Node",
    "Tape",
    "adam_step",
    "linear_forward",
    "mse",
    "ModelBundle",
    "load_model",
    "save_model",
    "RunConfig",
    "load_config",
    "parse_config",
    "RocCurve",
    "auc_pairwise",
    "classification_metrics",
    "knn_anomaly_scores",
    "optimal_threshold",
    "roc_curve",
    "GanModel",
    "LossHistory",
    "TrainConfig",
    "discriminator_forward",
    "generator_forward",
    "sample",
    "train_gan",
    "GumbelConfig",
    "gumbel_softmax",
    "hard_gumbel_softmax",
    "sample_gumbel",
    "AnomalyReport",
    "InversionConfig",
    "anomaly_score",
    "invert_latent",
    "score_batch",
    "DatasetSchema",
    "load_csv",
    "PipelineError",
    "run_pipeline",
    "Dataset",
    "GmmColumnModel",
    "MinMaxParams",
    "PreprocessConfig",
    "drop_columns",
    "fit_encoder",
    "fit_gmm_em",
    "fit_minmax",
    "mode_denormalize",
    "mode_normalize",
    "split_by_label",
    "make_synthetic",
]
