"""Feature-usage summaries and optimal oblique surrogate trees for tree ensembles."""

__version__ = "0.1.0"

from .dataset import Dataset, MinMaxNormalizer, SplitSpec, load_csv, load_split, split
from .forest import FixedDepthForest, Forest, train_forest
from .metrics import compute_statistics
from .surrogate import MiretSurrogate, SurrogateTree

__all__ = [
    "Dataset",
    "FixedDepthForest",
    "Forest",
    "MinMaxNormalizer",
    "MiretSurrogate",
    "SplitSpec",
    "SurrogateTree",
    "compute_statistics",
    "load_csv",
    "load_split",
    "split",
    "train_forest",
]
