"""Hidden-heterogeneity diagnostic.

For a test item with predicted distribution ``p_t`` the calibration items
whose predictions lie within Hellinger radius ``r`` form a neighbourhood
``U_t``.  A bagged tree ensemble ``g_t`` trained on the raw features of
``U_t`` is compared with the original classifier ``f`` by Brier score;
the clipped improvement ``max(0, Brier_f - Brier_g)`` is the item's hidden
heterogeneity.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .dataio import check_prob_matrix
from .errors import InvalidArgumentError
from .trees import DEFAULT_ALPHA_GRID, fit_bagged_arrays

SQRT2 = np.sqrt(2.0)
DEFAULT_RADIUS = 0.1
MIN_NEIGHBORHOOD = 10


def _simplex(p, name):
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size < 1 or np.any(~np.isfinite(p)) or np.any(p < 0) \
            or abs(p.sum() - 1.0) > 1e-9:
        raise InvalidArgumentError(f"{name} is not a probability vector")
    return p


def hellinger(p, q) -> float:
    """Hellinger distance ``sqrt(1/2 * sum_k (sqrt(p_k) - sqrt(q_k))^2)``."""
    p = _simplex(p, "p")
    q = _simplex(q, "q")
    if p.size != q.size:
        raise InvalidArgumentError("p and q have different lengths")
    return float(np.sqrt(0.5 * np.sum((np.sqrt(p) - np.sqrt(q)) ** 2)))


def hellinger_norm(p, q) -> float:
    """Same distance computed as ``||sqrt(p) - sqrt(q)||_2 / sqrt(2)``."""
    p = _simplex(p, "p")
    q = _simplex(q, "q")
    if p.size != q.size:
        raise InvalidArgumentError("p and q have different lengths")
    return float(np.linalg.norm(np.sqrt(p) - np.sqrt(q)) / SQRT2)


def hellinger_matrix(P, Q) -> np.ndarray:
    """Pairwise Hellinger distances between the rows of ``P`` and ``Q``."""
    rp, rq = np.sqrt(np.atleast_2d(P)), np.sqrt(np.atleast_2d(Q))
    diff = rp[:, None, :] - rq[None, :, :]
    return np.sqrt(0.5 * np.sum(diff * diff, axis=2))


@dataclass(eq=False)
class ProbIndex:
    """k-d tree over element-wise square roots of calibration predictions."""

    tree: cKDTree
    roots: np.ndarray
    ids: np.ndarray

    def __len__(self):
        return self.roots.shape[0]

    def query_ball(self, p_t, r: float) -> np.ndarray:
        """Positions ``i`` with ``D_H(p_t, p_i) <= r``, sorted ascending."""
        p_t = _simplex(p_t, "p_t")
        pos = self.tree.query_ball_point(np.sqrt(p_t), r * SQRT2)
        return np.array(sorted(pos), dtype=np.intp)

    def distances(self, p_t, positions=None) -> np.ndarray:
        rt = np.sqrt(_simplex(p_t, "p_t"))
        R = self.roots if positions is None else self.roots[positions]
        return np.sqrt(np.sum((R - rt[None, :]) ** 2, axis=1)) / SQRT2

    def nearest(self, p_t, k: int) -> np.ndarray:
        """Positions of the ``k`` Hellinger-nearest items; ties broken by item id."""
        k = min(int(k), len(self))
        d = self.distances(p_t)
        order = np.lexsort((self.ids.astype(str), d))
        return np.sort(order[:k])


def build_prob_index(cal_probs, ids=None) -> ProbIndex:
    P = check_prob_matrix(cal_probs)
    roots = np.sqrt(P)
    ids = np.arange(P.shape[0]) if ids is None else np.asarray(ids)
    return ProbIndex(cKDTree(roots), roots, ids)


def probability_neighborhood(index: ProbIndex, p_t, r: float = DEFAULT_RADIUS) -> np.ndarray:
    """Positions of calibration items with ``D_H(p_t, p_i) < r`` (strict)."""
    if r < 0:
        raise InvalidArgumentError("radius must be >= 0")
    cand = index.query_ball(p_t, r)
    if cand.size == 0:
        return cand
    # the k-d tree ball is closed; drop the boundary and confirm with the exact distance
    return cand[index.distances(p_t, cand) < r]


def neighborhood_seed(seed: int, ids) -> int:
    """Seed depending only on the global seed and the *set* of item ids."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(seed)).encode())
    for i in sorted(str(v) for v in ids):
        h.update(b"\x00")
        h.update(i.encode())
    return int.from_bytes(h.digest(), "little") >> 1


def brier_rows(P, y) -> np.ndarray:
    P = np.asarray(P, dtype=np.float64)
    onehot = np.eye(P.shape[1])[np.asarray(y)]
    return np.sum((P - onehot) ** 2, axis=1)


@dataclass(frozen=True)
class HHEntry:
    id: str
    hh: float
    neighborhood_size: int
    brier_f: float
    brier_g: float


def hh_from_predictions(probs_f, probs_g, labels):
    """``(hh, brier_f, brier_g)`` with ``hh = max(0, brier_f - brier_g)``."""
    bf = float(np.mean(brier_rows(probs_f, labels)))
    bg = float(np.mean(brier_rows(probs_g, labels)))
    return max(0.0, bf - bg), bf, bg


class HiddenHeterogeneity:
    """Hidden-heterogeneity estimator bound to one labelled calibration set.

    Parameters
    ----------
    cal : Dataset
        Calibration items (raw features ``x`` and labels).
    cal_probs : ndarray, shape (N, K)
        The classifier's predictions for ``cal``.
    r : float
        Hellinger radius of the probability neighbourhood.
    seed : int
        Global seed; the bootstrap seed of each local ensemble is derived
        from it and the sorted ids of the neighbourhood.
    min_neighborhood : int
        Neighbourhoods smaller than this are widened to the
        ``min_neighborhood`` Hellinger-nearest items.
    n_trees, alpha_grid
        Local bagged-ensemble configuration.
    """

    def __init__(self, cal, cal_probs, r: float = DEFAULT_RADIUS, seed: int = 0,
                 min_neighborhood: int = MIN_NEIGHBORHOOD, n_trees: int = 50,
                 alpha_grid=DEFAULT_ALPHA_GRID):
        P = check_prob_matrix(cal_probs)
        if P.shape[0] != cal.n_items:
            raise InvalidArgumentError("cal_probs must have one row per calibration item")
        if P.shape[1] != cal.n_classes:
            raise InvalidArgumentError("cal_probs has the wrong number of classes")
        self.cal = cal
        self.cal_probs = P
        self.r = float(r)
        self.seed = int(seed)
        self.min_neighborhood = int(min_neighborhood)
        self.n_trees = int(n_trees)
        self.alpha_grid = tuple(alpha_grid)
        self.index = build_prob_index(P, cal.ids)
        self._X = np.ascontiguousarray(cal.features, dtype=np.float64)
        self._y = np.asarray(cal.labels, dtype=np.intp)
        self._cache = {}

    def neighborhood(self, p_t) -> np.ndarray:
        pos = probability_neighborhood(self.index, p_t, self.r)
        if pos.size < self.min_neighborhood:
            pos = self.index.nearest(p_t, self.min_neighborhood)
        return pos

    def score_neighborhood(self, pos):
        """``(hh, brier_f, brier_g)`` for the calibration items at positions ``pos``."""
        key = frozenset(self.cal.ids[pos].tolist())
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        # canonical order makes the local fit independent of calibration-set order
        ids = self.cal.ids[pos]
        pos = pos[np.argsort(ids, kind="stable")]
        X, y = self._X[pos], self._y[pos]
        K = self.cal.n_classes
        if pos.size < 2 or np.all(y == y[0]):
            probs_g = np.eye(K)[y]
        else:
            ens = fit_bagged_arrays(X, y, K, self.n_trees, self.alpha_grid,
                                    seed=neighborhood_seed(self.seed, ids))
            probs_g = ens.predict_proba(X)
        out = hh_from_predictions(self.cal_probs[pos], probs_g, y)
        self._cache[key] = out
        return out

    def score(self, p_t, item_id="") -> HHEntry:
        pos = self.neighborhood(p_t)
        hh, bf, bg = self.score_neighborhood(pos)
        return HHEntry(str(item_id), hh, int(pos.size), bf, bg)

    def report(self, test_probs, test_ids=None) -> "HHReport":
        P = check_prob_matrix(test_probs)
        ids = np.arange(P.shape[0]).astype(str) if test_ids is None else np.asarray(test_ids)
        return HHReport([self.score(P[i], ids[i]) for i in range(P.shape[0])], radius=self.r)


def hidden_heterogeneity(p_t, cal, cal_probs, r: float = DEFAULT_RADIUS, seed: int = 0,
                         item_id="", **kw) -> HHEntry:
    """Hidden heterogeneity of a single test prediction ``p_t`` (see :class:`HiddenHeterogeneity`)."""
    return HiddenHeterogeneity(cal, cal_probs, r, seed, **kw).score(p_t, item_id)


@dataclass
class HHReport:
    entries: list
    radius: float = DEFAULT_RADIUS
    meta: dict = field(default_factory=dict)

    @property
    def hh(self) -> np.ndarray:
        return np.array([e.hh for e in self.entries])

    @property
    def mean_hh(self) -> float:
        return mean_hh(self.entries)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "hh", "neighborhood_size", "brier_f", "brier_g"])
            for e in self.entries:
                w.writerow([e.id, repr(e.hh), e.neighborhood_size, repr(e.brier_f), repr(e.brier_g)])

    def summary(self) -> dict:
        sizes = np.array([e.neighborhood_size for e in self.entries])
        return {"mean_hh": self.mean_hh, "n_items": len(self.entries), "radius": self.radius,
                "mean_neighborhood_size": float(sizes.mean()) if sizes.size else 0.0,
                **self.meta}

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def mean_hh(reports) -> float:
    """Arithmetic mean of per-item HH values (entries or plain numbers)."""
    vals = [r.hh if isinstance(r, HHEntry) else float(r) for r in reports]
    if not vals:
        raise InvalidArgumentError("mean_hh needs at least one item")
    return float(np.mean(vals))
