"""Tree ensembles with out-of-bag cost-complexity pruning."""

__version__ = "0.1.0"

from .cart import DecisionTree, GrowthParams, grow
from .ccp import PrunedSequence, select_best_subtree, weakest_link_sequence
from .dataset import Dataset, bootstrap, load_csv, stratified_split
from .ensemble import (
    Ensemble,
    fit,
    load_ensemble,
    oob_error,
    predict,
    prune_global_threshold,
    prune_independent,
    save_ensemble,
    size_ratio,
)

__all__ = [
    "Dataset",
    "DecisionTree",
    "Ensemble",
    "GrowthParams",
    "PrunedSequence",
    "__version__",
    "bootstrap",
    "fit",
    "grow",
    "load_csv",
    "load_ensemble",
    "oob_error",
    "predict",
    "prune_global_threshold",
    "prune_independent",
    "save_ensemble",
    "select_best_subtree",
    "size_ratio",
    "stratified_split",
    "weakest_link_sequence",
]
