"""CART trees, bagged ensembles, random forests and forest proximity."""

from ._backend import BACKEND, get_kernels
from .cart import DecisionTree, TreeParams, fit_tree, grow_tree, prune_path
from .ensemble import (DEFAULT_ALPHA_GRID, BaggedEnsemble, Forest, fit_bagged,
                       fit_bagged_arrays, fit_forest, fit_forest_arrays, leaf_indices,
                       predict_proba, proximity, proximity_matrix)

__all__ = [
    "BACKEND", "get_kernels", "DecisionTree", "TreeParams", "fit_tree", "grow_tree",
    "prune_path", "DEFAULT_ALPHA_GRID", "BaggedEnsemble", "Forest", "fit_bagged",
    "fit_bagged_arrays", "fit_forest", "fit_forest_arrays", "leaf_indices", "predict_proba",
    "proximity", "proximity_matrix",
]
