"""Bagged pruned-tree ensembles, random forests and forest proximity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgumentError
from ._backend import get_kernels
from .cart import DecisionTree, TreeParams, grow_tree

DEFAULT_ALPHA_GRID = tuple(np.linspace(0.0, 0.03, 7).tolist())


def _bootstrap_plan(m: int, n_trees: int, seed: int):
    """Bootstrap row indices (n_trees x m) and one 64-bit growth seed per tree."""
    rng = np.random.default_rng(seed)
    boots = rng.integers(0, m, size=(n_trees, m), dtype=np.intp)
    tree_seeds = rng.integers(0, np.iinfo(np.int64).max, size=n_trees, dtype=np.int64)
    return boots, tree_seeds


def _mean_proba(trees, X, alpha=0.0):
    out = trees[0].predict_proba(X, alpha)
    for t in trees[1:]:
        out = out + t.predict_proba(X, alpha)
    return out / len(trees)


@dataclass(eq=False)
class BaggedEnsemble:
    """Bagged CART trees sharing one bootstrap plan across a grid of pruning strengths.

    ``full_trees`` are grown unpruned; predictions at ``chosen_alpha`` route
    through them with pruning applied on the fly, which is equivalent to
    predicting with ``trees`` (the explicitly pruned copies).
    """

    full_trees: list
    bootstrap: np.ndarray
    alpha_grid: np.ndarray
    oob_brier: np.ndarray
    chosen_alpha: float
    n_features: int
    n_classes: int
    seed: int
    _pruned: list = None

    @property
    def n_trees(self) -> int:
        return len(self.full_trees)

    @property
    def trees(self) -> list:
        if self._pruned is None:
            self._pruned = [t.prune(self.chosen_alpha) for t in self.full_trees]
        return self._pruned

    def predict_proba(self, X, alpha: float | None = None) -> np.ndarray:
        """Unweighted mean of member-tree class frequencies."""
        a = self.chosen_alpha if alpha is None else float(alpha)
        return _mean_proba(self.full_trees, X, a)


def fit_bagged_arrays(X, y, n_classes: int, n_trees: int = 50,
                      alpha_grid=DEFAULT_ALPHA_GRID, seed: int = 0,
                      min_samples_leaf: int = 1, max_features=None) -> BaggedEnsemble:
    """Array-level version of :func:`fit_bagged`."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.intp)
    m = X.shape[0]
    if m < 2:
        raise InvalidArgumentError("bagging needs at least 2 items")
    if n_trees < 1:
        raise InvalidArgumentError("n_trees must be >= 1")
    grid = np.unique(np.asarray(alpha_grid, dtype=np.float64))
    if grid.size == 0:
        raise InvalidArgumentError("alpha_grid must be nonempty")
    if np.any(grid < 0) or not np.all(np.isfinite(grid)):
        raise InvalidArgumentError("alpha_grid values must be finite and >= 0")

    boots, tree_seeds = _bootstrap_plan(m, n_trees, seed)
    trees = []
    oob_sum = np.zeros((grid.size, m, n_classes))
    oob_n = np.zeros(m)
    for b in range(n_trees):
        params = TreeParams(min_samples_leaf=min_samples_leaf, max_features=max_features,
                            seed=int(tree_seeds[b]))
        tree = grow_tree(X, y, n_classes, params, sample_idx=boots[b])
        trees.append(tree)
        oob = np.ones(m, dtype=bool)
        oob[boots[b]] = False
        if not oob.any():
            continue
        Xo = X[oob]
        oob_n[oob] += 1
        for a, alpha in enumerate(grid):
            oob_sum[a, oob] += tree.predict_proba(Xo, alpha)

    seen = oob_n > 0
    onehot = np.eye(n_classes)[y[seen]]
    oob_brier = np.full(grid.size, np.nan)
    if seen.any():
        for a in range(grid.size):
            pred = oob_sum[a, seen] / oob_n[seen, None]
            oob_brier[a] = float(np.mean(np.sum((pred - onehot) ** 2, axis=1)))
    # argmin with ties resolved toward the smallest alpha (grid is sorted)
    chosen = 0 if np.all(np.isnan(oob_brier)) else int(np.nanargmin(oob_brier))
    return BaggedEnsemble(trees, boots, grid, oob_brier, float(grid[chosen]),
                          X.shape[1], int(n_classes), int(seed))


def fit_bagged(train, n_trees: int = 50, alpha_grid=DEFAULT_ALPHA_GRID, seed: int = 0,
               min_samples_leaf: int = 1, max_features=None) -> BaggedEnsemble:
    """Bag ``n_trees`` CART trees and pick the pruning strength by out-of-bag Brier score.

    Parameters
    ----------
    train : Dataset
    n_trees : int
        Ensemble size.
    alpha_grid : sequence of float
        Candidate ``ccp_alpha`` values; all candidates share the same
        bootstrap samples, so their OOB scores differ only through pruning.
    seed : int
        Seeds the bootstrap plan and each tree's feature order.

    Returns
    -------
    BaggedEnsemble
        ``oob_brier[i]`` belongs to ``alpha_grid[i]`` (sorted, deduplicated).
        Items never left out of bag are excluded from the OOB score.
    """
    if train is None:
        raise InvalidArgumentError("empty training set")
    return fit_bagged_arrays(train.features, train.labels, train.n_classes, n_trees,
                             alpha_grid, seed, min_samples_leaf, max_features)


@dataclass(eq=False)
class Forest:
    """Random forest of unpruned bootstrap trees."""

    trees: list
    bootstrap: np.ndarray
    n_features: int
    n_classes: int
    seed: int
    max_features: object = "sqrt"

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict_proba(self, X) -> np.ndarray:
        return _mean_proba(self.trees, X)

    def leaf_indices(self, X) -> np.ndarray:
        """Leaf id per tree; shape ``(n, n_trees)``, or ``(n_trees,)`` for one vector."""
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.n_features:
            raise InvalidArgumentError(
                f"expected {self.n_features} features, got {X.shape[1]}")
        out = np.empty((X.shape[0], self.n_trees), dtype=np.int64)
        for j, t in enumerate(self.trees):
            out[:, j] = t.apply(X)
        return out[0] if single else out


def fit_forest_arrays(X, y, n_classes: int, n_trees: int = 100, seed: int = 0,
                      max_features="sqrt", min_samples_leaf: int = 1) -> Forest:
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.intp)
    m = X.shape[0]
    if m < 1:
        raise InvalidArgumentError("cannot fit a forest on an empty dataset")
    if n_trees < 1:
        raise InvalidArgumentError("n_trees must be >= 1")
    boots, tree_seeds = _bootstrap_plan(m, n_trees, seed)
    trees = []
    for b in range(n_trees):
        params = TreeParams(min_samples_leaf=min_samples_leaf, max_features=max_features,
                            seed=int(tree_seeds[b]))
        trees.append(grow_tree(X, y, n_classes, params, sample_idx=boots[b]))
    return Forest(trees, boots, X.shape[1], int(n_classes), int(seed), max_features)


def fit_forest(train, n_trees: int = 100, seed: int = 0, max_features="sqrt",
               min_samples_leaf: int = 1) -> Forest:
    """Random forest: bootstrap trees, no depth limit, ``ceil(sqrt(d))`` features per split."""
    if train is None:
        raise InvalidArgumentError("empty training set")
    return fit_forest_arrays(train.features, train.labels, train.n_classes, n_trees, seed,
                             max_features, min_samples_leaf)


def leaf_indices(forest: Forest, x) -> np.ndarray:
    return forest.leaf_indices(x)


def proximity_matrix(leaves_a, leaves_b) -> np.ndarray:
    """Leaf-match fractions between two leaf-index matrices ``(na, T)`` and ``(nb, T)``."""
    la = np.ascontiguousarray(np.atleast_2d(leaves_a), dtype=np.int64)
    lb = np.ascontiguousarray(np.atleast_2d(leaves_b), dtype=np.int64)
    if la.shape[1] != lb.shape[1]:
        raise InvalidArgumentError("leaf matrices disagree on the number of trees")
    counts = get_kernels().match_counts(la, lb)
    return counts / float(la.shape[1])


def proximity(forest: Forest, a, b) -> float:
    """Fraction of trees that route ``a`` and ``b`` to the same leaf."""
    la = forest.leaf_indices(np.asarray(a, dtype=np.float64).reshape(1, -1))
    lb = forest.leaf_indices(np.asarray(b, dtype=np.float64).reshape(1, -1))
    return int(np.sum(la == lb)) / forest.n_trees


def predict_proba(model, X) -> np.ndarray:
    """Class probabilities from a tree, bagged ensemble or forest."""
    if not isinstance(model, (DecisionTree, BaggedEnsemble, Forest)):
        raise InvalidArgumentError(f"unsupported model type {type(model).__name__}")
    return model.predict_proba(X)
