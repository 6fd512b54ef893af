"""Gini CART trees with minimal cost-complexity pruning."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..errors import InvalidArgumentError
from ._backend import get_kernels


@dataclass(frozen=True)
class TreeParams:
    """Growth and pruning settings.

    ``max_features`` is ``None``/``"all"`` (every feature), ``"sqrt"``
    (``ceil(sqrt(d))``) or a positive count.
    """

    min_samples_leaf: int = 1
    max_features: object = None
    ccp_alpha: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.min_samples_leaf < 1:
            raise InvalidArgumentError("min_samples_leaf must be >= 1")
        if not self.ccp_alpha >= 0:
            raise InvalidArgumentError("ccp_alpha must be >= 0")

    def n_candidate_features(self, d: int) -> int:
        mf = self.max_features
        if mf is None or mf == "all":
            return d
        if mf == "sqrt":
            return max(1, math.ceil(math.sqrt(d)))
        if isinstance(mf, (int, np.integer)) and mf >= 1:
            return min(int(mf), d)
        raise InvalidArgumentError(f"invalid max_features {mf!r}")


@dataclass(eq=False)
class DecisionTree:
    """Array-backed binary tree.

    Node ``t`` splits on ``feature[t]`` at ``threshold[t]`` (``x <= thr``
    goes left); leaves have ``feature[t] == -1``.  ``counts[t]`` is the
    class histogram of training samples reaching ``t``, ``risk[t]`` the
    unnormalized Gini risk ``n_t * gini_t`` and ``collapse[t]`` the pruning
    strength at which ``t`` becomes a leaf.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray
    n_node_samples: np.ndarray
    risk: np.ndarray
    n_features: int
    n_classes: int
    params: TreeParams
    n_root: float
    _collapse: np.ndarray = None

    @property
    def collapse(self) -> np.ndarray:
        if self._collapse is None:
            self._collapse, _, _ = get_kernels().cost_complexity(
                self.left, self.right, self.risk, float(self.n_root))
        return self._collapse

    def _route(self, X, alpha):
        alpha = float(alpha)
        # the collapse array is only read when alpha > 0
        collapse = self.collapse if alpha > 0 else self.threshold
        return get_kernels().route(self.feature, self.threshold, self.left, self.right,
                                   collapse, alpha, X)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    @property
    def leaf_probs(self) -> np.ndarray:
        """Per-node class frequencies (valid for any node, used at leaves)."""
        c = self.counts.astype(np.float64)
        return c / c.sum(axis=1, keepdims=True)

    def _check_X(self, X):
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.n_features:
            raise InvalidArgumentError(
                f"expected {self.n_features} features, got {X.shape[1]}")
        return np.ascontiguousarray(X), single

    def apply(self, X, alpha: float = 0.0) -> np.ndarray:
        """Node id reached by each row, optionally stopping at nodes pruned at ``alpha``."""
        X, single = self._check_X(X)
        ids = self._route(X, alpha)
        return ids[0] if single else ids

    def predict_proba(self, X, alpha: float = 0.0) -> np.ndarray:
        X, single = self._check_X(X)
        nodes = self._route(X, alpha)
        out = self.leaf_probs[nodes]
        return out[0] if single else out

    def prune(self, alpha: float) -> "DecisionTree":
        """Compact copy of the subtree kept at pruning strength ``alpha``.

        ``alpha <= 0`` keeps the tree unchanged.
        """
        alpha = float(alpha)
        keep_leaf = self.feature < 0
        if alpha > 0:
            keep_leaf = keep_leaf | (self.collapse <= alpha)
        # same id allocation as the builder: children numbered on expansion,
        # left subtree processed first
        new_of = {0: 0}
        child = {}
        stack = [0]
        nxt = 1
        while stack:
            old = stack.pop()
            if keep_leaf[old]:
                continue
            l, r = int(self.left[old]), int(self.right[old])
            new_of[l], new_of[r] = nxt, nxt + 1
            nxt += 2
            child[old] = (l, r)
            stack.append(r)
            stack.append(l)
        old_ids = np.array(sorted(new_of, key=new_of.get), dtype=np.int64)
        n = len(old_ids)
        feature = np.where(keep_leaf[old_ids], -1, self.feature[old_ids]).astype(np.int64)
        threshold = np.where(keep_leaf[old_ids], 0.0, self.threshold[old_ids])
        left = np.full(n, -1, dtype=np.int64)
        right = np.full(n, -1, dtype=np.int64)
        for old, (l, r) in child.items():
            left[new_of[old]] = new_of[l]
            right[new_of[old]] = new_of[r]
        return DecisionTree(feature, threshold, left, right, self.counts[old_ids].copy(),
                            self.n_node_samples[old_ids].copy(), self.risk[old_ids].copy(),
                            self.n_features, self.n_classes,
                            replace(self.params, ccp_alpha=alpha), self.n_root)

    def structure(self) -> tuple:
        """Hashable summary used for exact structural comparisons."""
        return (tuple(self.feature.tolist()), tuple(self.threshold.tolist()),
                tuple(self.left.tolist()), tuple(self.right.tolist()),
                tuple(map(tuple, self.counts.tolist())))


def _as_xy(train):
    X = np.ascontiguousarray(train.features, dtype=np.float64)
    y = np.ascontiguousarray(train.labels, dtype=np.intp)
    return X, y, int(train.n_classes)


def grow_tree(X, y, n_classes: int, params: TreeParams, sample_idx=None) -> DecisionTree:
    """Grow (and prune, when ``params.ccp_alpha > 0``) a tree on ``X[sample_idx]``.

    ``sample_idx`` may repeat rows (bootstrap samples); repeats count as
    separate samples in the class histograms.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.intp)
    if sample_idx is None:
        sample_idx = np.arange(X.shape[0], dtype=np.intp)
    sample_idx = np.ascontiguousarray(sample_idx, dtype=np.intp)
    m = len(sample_idx)
    if m == 0:
        raise InvalidArgumentError("cannot fit a tree on an empty dataset")
    if m < params.min_samples_leaf:
        raise InvalidArgumentError("fewer samples than min_samples_leaf")
    d = X.shape[1]
    feature, threshold, left, right, counts, nsamp, risk = get_kernels().build_tree(
        X, y, sample_idx, int(n_classes), int(params.min_samples_leaf),
        params.n_candidate_features(d), int(params.seed) & ((1 << 64) - 1))
    tree = DecisionTree(feature, threshold, left, right, counts, nsamp, risk, d, int(n_classes), replace(params, ccp_alpha=0.0), float(m))
    if params.ccp_alpha > 0:
        tree = tree.prune(params.ccp_alpha)
    return tree


def fit_tree(train, params: TreeParams = TreeParams()) -> DecisionTree:
    """Fit a Gini CART tree on a Dataset, then prune at ``params.ccp_alpha``."""
    if train is None or len(train.labels) == 0:
        raise InvalidArgumentError("cannot fit a tree on an empty dataset")
    X, y, K = _as_xy(train)
    return grow_tree(X, y, K, params)


def prune_path(tree: DecisionTree):
    """Weakest-link sequence ``[(alpha, n_leaves), ...]`` of an unpruned tree.

    Alphas are nondecreasing and leaf counts strictly decreasing; the last
    entry is the root alone.  Pruning at any alpha in
    ``[alpha_i, alpha_{i+1})`` (with ``alpha > 0``) keeps ``n_leaves_i``
    leaves; alpha 0 means no pruning.
    """
    _, alphas, leaves = get_kernels().cost_complexity(tree.left, tree.right, tree.risk,
                                                      float(tree.n_root))
    return [(float(a), int(n)) for a, n in zip(alphas, leaves)]
