"""Scores and experiment statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, UndefinedCorrelationError


def _aligned(probs, labels):
    P = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    y = np.asarray(labels)
    if y.ndim != 1 or y.shape[0] != P.shape[0]:
        raise InvalidArgumentError(f"{P.shape[0]} prediction rows but {y.size} labels")
    if y.size == 0:
        raise InvalidArgumentError("no items to score")
    if np.any(y < 0) or np.any(y >= P.shape[1]):
        raise InvalidArgumentError("labels out of range for the probability columns")
    return P, y.astype(np.intp)


def brier(probs, labels) -> float:
    """Multi-class Brier score ``mean_i sum_k (p_ik - 1[y_i = k])^2`` (range [0, 2])."""
    P, y = _aligned(probs, labels)
    onehot = np.zeros_like(P)
    onehot[np.arange(y.size), y] = 1.0
    return float(np.mean(np.sum((P - onehot) ** 2, axis=1)))


def accuracy(probs, labels) -> float:
    """Fraction of items whose argmax equals the label; ties go to the smallest class index."""
    P, y = _aligned(probs, labels)
    return float(np.mean(np.argmax(P, axis=1) == y))


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise InvalidArgumentError("pearson needs two aligned vectors")
    if x.size < 3:
        raise InvalidArgumentError("pearson needs at least 3 pairs")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("correlation is undefined for a constant coordinate")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def improvement_vs_hh(pairs) -> float:
    """Pearson correlation over ``(mean_hh, brier_before - brier_after)`` pairs."""
    arr = np.asarray(pairs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InvalidArgumentError("pairs must be a sequence of (mean_hh, improvement)")
    return pearson(arr[:, 0], arr[:, 1])


@dataclass(frozen=True)
class TrialStats:
    """Mean and standard error (sample std / sqrt(n)) over trials.

    ``single_trial`` flags that ``se`` is 0 by convention rather than estimated.
    """

    values: tuple
    mean: float
    se: float
    single_trial: bool

    @property
    def n(self) -> int:
        return len(self.values)

    def to_dict(self):
        return {"mean": self.mean, "se": self.se, "n": self.n, "single_trial": self.single_trial,
                "values": list(self.values)}


def aggregate_trials(values) -> TrialStats:
    v = np.asarray(list(values), dtype=np.float64)
    if v.size == 0:
        raise InvalidArgumentError("no trial values to aggregate")
    if v.size == 1:
        return TrialStats((float(v[0]),), float(v[0]), 0.0, True)
    se = float(np.std(v, ddof=1) / math.sqrt(v.size))
    return TrialStats(tuple(v.tolist()), float(v.mean()), se, False)


def best_within_se(stats: dict) -> dict:
    """Flag entries whose mean is within one standard error of the lowest mean.

    ``stats`` maps a key to TrialStats (lower is better); an entry is
    flagged when ``mean <= best.mean + best.se``.
    """
    if not stats:
        return {}
    best = min(stats.values(), key=lambda s: s.mean)
    return {k: bool(s.mean <= best.mean + best.se) for k, s in stats.items()}
