"""Transductive zero-shot learning with visual structure constraints."""

from vsc_zsl.align import (
    Assignment,
    chamfer,
    cost_matrix,
    many_to_one_report,
    matching_loss,
    min_weight_perfect_matching,
)
from vsc_zsl.cluster import KMeansResult, kmeans, voting_upper_bound
from vsc_zsl.dataset import (
    AttributeTable,
    CenterSet,
    ClassSplit,
    DataError,
    LabeledFeatureSet,
    SynthParams,
    ZSLDataset,
    compute_real_centers,
    generate_synthetic,
    l2_normalize_rows,
    load_dataset,
    save_dataset,
    synthesize,
)
from vsc_zsl.embed import AdamState, EmbeddingNet, LossSpec, adam_step, forward, grad_total, loss_total
from vsc_zsl.evaluation import (
    evaluate_conventional,
    evaluate_generalized,
    harmonic_mean,
    per_class_accuracy,
    predict,
)
from vsc_zsl.train import TrainConfig, TrainLog, select_beta, train, train_dataset

__all__ = [
    "adam_step",
    "AdamState",
    "Assignment",
    "AttributeTable",
    "CenterSet",
    "chamfer",
    "ClassSplit",
    "compute_real_centers",
    "cost_matrix",
    "DataError",
    "EmbeddingNet",
    "evaluate_conventional",
    "evaluate_generalized",
    "forward",
    "generate_synthetic",
    "grad_total",
    "harmonic_mean",
    "kmeans",
    "KMeansResult",
    "l2_normalize_rows",
    "LabeledFeatureSet",
    "load_dataset",
    "loss_total",
    "LossSpec",
    "many_to_one_report",
    "matching_loss",
    "min_weight_perfect_matching",
    "per_class_accuracy",
    "predict",
    "save_dataset",
    "select_beta",
    "SynthParams",
    "synthesize",
    "train",
    "train_dataset",
    "TrainConfig",
    "TrainLog",
    "voting_upper_bound",
    "ZSLDataset",
]

__version__ = "0.1.0"
