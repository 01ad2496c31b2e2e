"""Knowledge distillation for sentence-level translation quality estimation.

Train a small bidirectional-GRU attention regressor on teacher labels,
augment its training data by pseudo-labeling unlabeled pairs, and filter
noisy labels by ensemble variance.
"""

from .corpus import Dataset, Example, Vocabulary, build_vocab, read_pairs, tokenize, write_pairs
from .distill import FilterStats, filter_by_variance, run_pipeline, size_subsets
from .evaluation import EvalReport, bin_variance_error, evaluate, pearson, spearman
from .exceptions import DistilQEError
from .model import ModelConfig, Student, init_params, load_model, save_model
from .teacher import EnsembleTeacher, FileTeacher, OracleConfig, SyntheticTeacher, label_dataset, train_ensemble
from .trainer import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "DistilQEError",
    "EnsembleTeacher",
    "EvalReport",
    "Example",
    "FileTeacher",
    "FilterStats",
    "ModelConfig",
    "OracleConfig",
    "Student",
    "SyntheticTeacher",
    "TrainConfig",
    "Vocabulary",
    "bin_variance_error",
    "build_vocab",
    "evaluate",
    "filter_by_variance",
    "init_params",
    "label_dataset",
    "load_model",
    "pearson",
    "read_pairs",
    "run_pipeline",
    "save_model",
    "size_subsets",
    "spearman",
    "tokenize",
    "train",
    "train_ensemble",
    "write_pairs",
]
