"""Learn small Boolean classification rules by column generation."""

from .dataset import (
    BinaryDataset,
    DatasetError,
    FeatureMeta,
    binarize_table,
    build_matrix,
    ingest_csv,
    read_csv_table,
)
from .ruleset import RuleSet, build_ruleset, hamming_loss, predict

__version__ = "0.1.0"

__all__ = [
    "BinaryDataset",
    "DatasetError",
    "FeatureMeta",
    "RuleSet",
    "binarize_table",
    "build_matrix",
    "build_ruleset",
    "hamming_loss",
    "ingest_csv",
    "predict",
    "read_csv_table",
    "__version__",
]
