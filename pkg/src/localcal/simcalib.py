"""Similarity-weighted local calibration.

Calibration items and test items live in the augmented space ``[x, p]``
(raw features followed by the classifier's probability vector).  A random
forest fitted on the augmented calibration set defines the similarity
``s(t, i)``: the fraction of trees in which ``t`` and ``i`` share a leaf.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .dataio import check_prob_matrix
from .errors import InvalidArgumentError
from .trees import Forest, fit_forest_arrays, proximity_matrix

SBA_DELTA = 1e-12


def augment(X, P) -> np.ndarray:
    """Concatenate features and probability vectors row-wise."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    P = np.atleast_2d(np.asarray(P, dtype=np.float64))
    if X.shape[0] != P.shape[0]:
        raise InvalidArgumentError("features and probabilities have different row counts")
    return np.hstack([X, P])


def _batch(x_t, p_t, d, K):
    x = np.asarray(x_t, dtype=np.float64)
    p = np.asarray(p_t, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    p = np.atleast_2d(p)
    if x.shape[1] != d:
        raise InvalidArgumentError(f"expected {d} features, got {x.shape[1]}")
    if p.shape[1] != K:
        raise InvalidArgumentError(f"expected {K} probabilities, got {p.shape[1]}")
    check_prob_matrix(p)
    return augment(x, p), single


def _id_rank(ids):
    """Rank of every id in sorted order (used for deterministic tie-breaks)."""
    order = np.argsort(np.asarray(ids).astype(str), kind="stable")
    rank = np.empty(order.size, dtype=np.intp)
    rank[order] = np.arange(order.size)
    return rank


@dataclass(eq=False)
class SimilarityModel:
    """Random forest on augmented calibration points plus cached calibration leaves."""

    forest: Forest
    cal_aug: np.ndarray
    cal_labels: np.ndarray
    cal_ids: np.ndarray
    cal_leaves: np.ndarray
    n_features: int
    n_classes: int
    seed: int

    @property
    def n_cal(self) -> int:
        return self.cal_aug.shape[0]

    def similarities(self, x_t, p_t) -> np.ndarray:
        """``s(t, i)`` for every test row ``t`` and calibration item ``i``; shape ``(n_t, N)``."""
        A, single = _batch(x_t, p_t, self.n_features, self.n_classes)
        S = proximity_matrix(self.forest.leaf_indices(A), self.cal_leaves)
        return S[0] if single else S

    def nearest_augmented(self, A) -> np.ndarray:
        """Position of the Euclidean-nearest calibration item to each augmented row."""
        rank = _id_rank(self.cal_ids)
        out = np.empty(A.shape[0], dtype=np.intp)
        for i, a in enumerate(A):
            dist = np.sqrt(np.sum((self.cal_aug - a[None, :]) ** 2, axis=1))
            out[i] = np.lexsort((rank, dist))[0]
        return out


def build_similarity_model(cal, cal_probs, seed: int = 0, n_trees: int = 100,
                           max_features="sqrt") -> SimilarityModel:
    """Fit the proximity forest on ``[x, p]`` of the calibration set.

    Defaults: 100 bootstrap trees, no depth limit, ``ceil(sqrt(d + K))``
    candidate features per split.
    """
    if cal is None or cal.n_items < 1:
        raise InvalidArgumentError("empty calibration set")
    P = check_prob_matrix(cal_probs)
    if P.shape != (cal.n_items, cal.n_classes):
        raise InvalidArgumentError("cal_probs must be an N x K matrix aligned with cal")
    A = augment(cal.features, P)
    forest = fit_forest_arrays(A, cal.labels, cal.n_classes, n_trees, seed, max_features)
    leaves = forest.leaf_indices(A)
    return SimilarityModel(forest, A, np.asarray(cal.labels), np.asarray(cal.ids), leaves,
                           cal.n_features, cal.n_classes, int(seed))


def similarities(model: SimilarityModel, x_t, p_t) -> np.ndarray:
    return model.similarities(x_t, p_t)


def _weighted_labels(W, labels, K):
    onehot = np.eye(K)[labels]
    return (W @ onehot) / W.sum(axis=1, keepdims=True)


def _swc_from_sims(model, S, A):
    K = model.n_classes
    tot = S.sum(axis=1)
    out = np.empty((S.shape[0], K))
    ok = tot > 0
    if ok.any():
        out[ok] = _weighted_labels(S[ok], model.cal_labels, K)
    if (~ok).any():
        near = model.nearest_augmented(A[~ok])
        out[~ok] = np.eye(K)[model.cal_labels[near]]
    return out


def swc_calibrate(model: SimilarityModel, x_t, p_t) -> np.ndarray:
    """Similarity-weighted label frequencies ``q[k] = sum_i s(t,i) 1(y_i=k) / sum_i s(t,i)``.

    A test item sharing no leaf with any calibration item gets the one-hot
    label of its Euclidean-nearest calibration item in augmented space.
    Accepts one item (1-D inputs) or a batch.
    """
    A, single = _batch(x_t, p_t, model.n_features, model.n_classes)
    S = proximity_matrix(model.forest.leaf_indices(A), model.cal_leaves)
    out = _swc_from_sims(model, S, A)
    return out[0] if single else out


def swc_hh_calibrate(model: SimilarityModel, x_t, p_t, hh_t) -> np.ndarray:
    """SWC restricted to calibration items with ``s(t, i) >= hh_t / 2``.

    When no item passes the threshold the output is the one-hot label of
    the most similar calibration item (ties: smallest id).
    """
    A, single = _batch(x_t, p_t, model.n_features, model.n_classes)
    hh = np.broadcast_to(np.asarray(hh_t, dtype=np.float64), (A.shape[0],))
    if np.any(hh < 0) or np.any(hh > 2) or np.any(~np.isfinite(hh)):
        raise InvalidArgumentError("hh values must lie in [0, 2]")
    S = proximity_matrix(model.forest.leaf_indices(A), model.cal_leaves)
    keep = S >= (hh / 2.0)[:, None]
    W = np.where(keep, S, 0.0)
    out = _swc_from_sims(model, W, A)
    empty = ~keep.any(axis=1)
    if empty.any():
        rank = _id_rank(model.cal_ids)
        for i in np.flatnonzero(empty):
            best = np.lexsort((rank, -S[i]))[0]
            out[i] = np.eye(model.n_classes)[model.cal_labels[best]]
    return out[0] if single else out


def calibration_support(model: SimilarityModel, x_t, p_t) -> np.ndarray:
    """Total similarity mass ``sum_i s(t, i)`` received from the calibration set."""
    S = model.similarities(x_t, p_t)
    return S.sum(axis=-1)


def sba_calibrate(cal, cal_probs, x_t, p_t, k: int = 10, weighted: bool = False,
                  delta: float = SBA_DELTA) -> np.ndarray:
    """Label frequencies of the ``k`` Euclidean-nearest calibration items in augmented space.

    ``weighted=True`` weights each neighbour by ``1 / (dist + delta)``.
    Distance ties at the k-th neighbour are resolved by smallest item id.
    """
    P = check_prob_matrix(cal_probs)
    N = cal.n_items
    if k < 1 or k > N:
        raise InvalidArgumentError(f"k={k} must lie in 1..{N}")
    C = augment(cal.features, P)
    A, single = _batch(x_t, p_t, cal.n_features, cal.n_classes)
    rank = _id_rank(cal.ids)
    n_q = min(N, k + 8)
    dist, idx = cKDTree(C).query(A, k=n_q)
    dist = np.atleast_2d(dist).reshape(A.shape[0], n_q)
    idx = np.atleast_2d(idx).reshape(A.shape[0], n_q)
    K = cal.n_classes
    onehot = np.eye(K)[np.asarray(cal.labels)]
    out = np.empty((A.shape[0], K))
    for t in range(A.shape[0]):
        # exact distances so equal points compare equal
        d_exact = np.sqrt(np.sum((C[idx[t]] - A[t][None, :]) ** 2, axis=1))
        order = np.lexsort((rank[idx[t]], d_exact))[:k]
        nb, dn = idx[t][order], d_exact[order]
        if weighted:
            w = 1.0 / (dn + delta)
            out[t] = (w @ onehot[nb]) / w.sum()
        else:
            out[t] = onehot[nb].mean(axis=0)
    return out[0] if single else out


@dataclass
class SupportReport:
    ids: np.ndarray
    support: np.ndarray
    rotated: np.ndarray | None = None

    def summary(self) -> dict:
        out = {"n_items": int(self.support.size), "mean_support": float(self.support.mean())}
        if self.rotated is not None and self.rotated.any():
            out["mean_support_rotated"] = float(self.support[self.rotated].mean())
            if (~self.rotated).any():
                out["mean_support_unrotated"] = float(self.support[~self.rotated].mean())
        return out

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "support", "rotated"])
            rot = self.rotated if self.rotated is not None else np.zeros(self.support.size, bool)
            for i, s, r in zip(self.ids, self.support, rot):
                w.writerow([i, repr(float(s)), int(r)])


def support_histogram(support_unshifted, support_shifted=None, bins: int = 20, upper=None):
    """Common-edge histogram of two support populations.

    Returns rows ``(bin_left, bin_right, count_unshifted, count_shifted)``
    over ``[0, upper]`` (default: the largest observed support).
    """
    a = np.asarray(support_unshifted, dtype=np.float64)
    b = np.asarray(support_shifted if support_shifted is not None else [], dtype=np.float64)
    if upper is None:
        both = np.concatenate([a, b])
        upper = float(both.max()) if both.size else 1.0
    upper = upper if upper > 0 else 1.0
    edges = np.linspace(0.0, upper, bins + 1)
    ca, _ = np.histogram(a, edges)
    cb, _ = np.histogram(b, edges)
    return [(float(edges[i]), float(edges[i + 1]), int(ca[i]), int(cb[i])) for i in range(bins)]


def write_support_histogram(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_left", "bin_right", "count_unshifted", "count_shifted"])
        for r in rows:
            w.writerow([repr(r[0]), repr(r[1]), r[2], r[3]])
