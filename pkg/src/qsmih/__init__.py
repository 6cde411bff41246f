"""Supervised binary hashing with a clamped quadratic spherical mutual information loss."""

from .data import Dataset, Standardizer, load_dataset, save_dataset
from .encoder import Encoder, load_encoder, save_encoder
from .estimator import QSMIHashing
from .evaluation import evaluate_codes, mean_average_precision, precision_hamming2
from .hamming import BinaryCodeSet, binarize, knn_query, load_codes, radius_query, save_codes
from .information import clamped_qsmi_grad, combined_loss, qmi, qmi_potentials, qsmi
from .similarity import estimate_batch_m, indicator_matrix, pairwise_similarity
from .trainer import TrainConfig, TrainLog, train

__version__ = "0.1.0"

__all__ = [
    "BinaryCodeSet",
    "Dataset",
    "Encoder",
    "QSMIHashing",
    "Standardizer",
    "TrainConfig",
    "TrainLog",
    "binarize",
    "clamped_qsmi_grad",
    "combined_loss",
    "estimate_batch_m",
    "evaluate_codes",
    "indicator_matrix",
    "knn_query",
    "load_codes",
    "load_dataset",
    "load_encoder",
    "mean_average_precision",
    "pairwise_similarity",
    "precision_hamming2",
    "qmi",
    "qmi_potentials",
    "qsmi",
    "radius_query",
    "save_codes",
    "save_dataset",
    "save_encoder",
    "train",
]
