"""Datasets: synthesis, CSV ingestion, splitting and covariate-shift transforms.

CSV layouts
-----------
Dataset files carry the header ``id,f0,...,f{d-1},label``; prediction files
carry ``id,p0,...,p{K-1}``.  Both are UTF-8 with ``.`` as decimal separator.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, ParseError, ValidationError

SIMPLEX_TOL = 1e-9
RENORMALIZE_TOL = 1e-6


def _readonly(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix, integer labels in ``0..n_classes-1`` and stable item ids.

    Arrays are copied and made read-only on construction, so a Dataset can
    be shared freely.
    """

    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    ids: np.ndarray = None
    class_names: tuple = ()

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2:
            raise InvalidArgumentError("features must be a 2-D matrix")
        y = np.asarray(self.labels)
        if y.ndim != 1 or len(y) != X.shape[0]:
            raise InvalidArgumentError("labels must be a vector aligned with the feature rows")
        if len(y) < 1:
            raise InvalidArgumentError("a dataset needs at least one item")
        if not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.equal(np.mod(y, 1), 0)):
                raise InvalidArgumentError("labels must be integers")
        y = y.astype(np.intp)
        K = int(self.n_classes)
        if K < 1 or y.min() < 0 or y.max() >= K:
            raise InvalidArgumentError(f"labels must lie in 0..{K - 1}")
        if not np.all(np.isfinite(X)):
            raise InvalidArgumentError("feature rows must be finite")
        ids = self.ids
        if ids is None:
            ids = np.arange(len(y)).astype(str)
        ids = np.asarray(ids).astype(str)
        if len(ids) != len(y):
            raise InvalidArgumentError("ids must align with the feature rows")
        if len(np.unique(ids)) != len(ids):
            raise InvalidArgumentError("item ids must be unique")
        object.__setattr__(self, "features", _readonly(np.ascontiguousarray(X)))
        object.__setattr__(self, "labels", _readonly(y))
        object.__setattr__(self, "n_classes", K)
        object.__setattr__(self, "ids", _readonly(ids))
        object.__setattr__(self, "class_names", tuple(str(c) for c in self.class_names))

    @property
    def n_items(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    def __len__(self):
        return self.n_items

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(self.features[index], self.labels[index], self.n_classes,
                       self.ids[index], self.class_names)


@dataclass(frozen=True)
class SplitSpec:
    n_train: int
    n_test: int
    n_cal_pool: int
    seed: int = 0

    def __post_init__(self):
        for name in ("n_train", "n_test", "n_cal_pool"):
            if int(getattr(self, name)) < 0:
                raise InvalidArgumentError(f"{name} must be nonnegative")


@dataclass(frozen=True, eq=False)
class PredictionSet:
    """Per-item probability vectors, one row per id."""

    ids: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.probs, dtype=np.float64)
        ids = np.asarray(self.ids).astype(str)
        if P.ndim != 2 or P.shape[0] != len(ids):
            raise ValidationError("probs must be an N x K matrix aligned with ids")
        check_prob_matrix(P, ids)
        if len(np.unique(ids)) != len(ids):
            raise ValidationError("prediction ids must be unique")
        object.__setattr__(self, "ids", _readonly(ids))
        object.__setattr__(self, "probs", _readonly(P))

    @property
    def n_classes(self):
        return self.probs.shape[1]

    def aligned(self, ids) -> np.ndarray:
        """Rows reordered to match ``ids``; every id must be present."""
        pos = {k: i for i, k in enumerate(self.ids)}
        out = np.empty((len(ids), self.n_classes))
        for j, k in enumerate(map(str, ids)):
            i = pos.get(k)
            if i is None:
                raise ValidationError(f"no prediction for item id {k!r}")
            out[j] = self.probs[i]
        return out


def check_prob_matrix(P, ids=None, tol=SIMPLEX_TOL):
    """Return P as a float matrix; raise ValidationError unless every row lies in the simplex."""
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[1] < 1:
        raise ValidationError("probabilities must form an N x K matrix")
    bad = ~np.all(np.isfinite(P), axis=1) | np.any(P < 0, axis=1) | np.any(P > 1, axis=1) \
        | (np.abs(P.sum(axis=1) - 1.0) > tol)
    if bad.any():
        i = int(np.argmax(bad))
        who = str(ids[i]) if ids is not None else i
        raise ValidationError(f"row {who!r} is not a probability vector: {P[i].tolist()}")
    return P


# ----------------------------------------------------------------------
# synthesis
# ----------------------------------------------------------------------

def make_moons(n: int, noise: float = 0.3, seed: int = 0) -> Dataset:
    """Two interleaving half circles.

    Class 0 (``n // 2`` points) sits on ``(cos t, sin t)`` and class 1 on
    ``(1 - cos t, 0.5 - sin t)`` for ``t`` evenly spaced in ``[0, pi]``;
    isotropic Gaussian noise with standard deviation ``noise`` is added.
    """
    if n < 2:
        raise InvalidArgumentError("make_moons needs n >= 2")
    if noise < 0:
        raise InvalidArgumentError("noise must be nonnegative")
    n0 = n // 2
    n1 = n - n0
    t0 = np.linspace(0.0, np.pi, n0)
    t1 = np.linspace(0.0, np.pi, n1)
    X = np.vstack([np.column_stack([np.cos(t0), np.sin(t0)]),
                   np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])])
    y = np.concatenate([np.zeros(n0, dtype=np.intp), np.ones(n1, dtype=np.intp)])
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    X = X[perm]
    y = y[perm]
    if noise > 0:
        X = X + rng.normal(scale=noise, size=X.shape)
    return Dataset(X, y, 2, class_names=("0", "1"))


def make_glyphs(n: int, side: int = 8, n_classes: int = 2, prototypes_per_class: int = 4,
                noise: float = 0.2, shared: float = 0.0, upright: float = 0.0,
                seed: int = 0) -> Dataset:
    """Small synthetic images built from per-class stroke prototypes.

    Each class owns ``prototypes_per_class`` binary stroke patterns drawn in
    the upper-left part of a ``side x side`` canvas and thickened by a 3x3
    dilation.  An item copies one
    prototype, shifts it by at most one pixel and adds Gaussian pixel noise.
    With ``shared > 0`` that fraction of items takes its prototype from a
    random class, which blurs class boundaries.  ``upright`` is the
    probability that a stroke is vertical (as in handwritten digits); other
    strokes pick one of four directions uniformly.  Features are flattened
    row-major, so :func:`rotate90` applies.
    """
    if n < 2 or side < 4 or n_classes < 2 or prototypes_per_class < 1:
        raise InvalidArgumentError("make_glyphs: invalid size arguments")
    if not 0.0 <= upright <= 1.0:
        raise InvalidArgumentError("upright must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    reach = max(3, (5 * side) // 8)
    protos = np.zeros((n_classes, prototypes_per_class, side, side))
    for c in range(n_classes):
        for j in range(prototypes_per_class):
            img = protos[c, j]
            for _ in range(2):
                r0, c0 = rng.integers(0, reach, size=2)
                if upright > 0 and rng.random() < upright:
                    dr, dc = 1, 0
                else:
                    dr, dc = [(0, 1), (1, 0), (1, 1), (1, -1)][rng.integers(4)]
                length = int(rng.integers(3, reach + 1))
                for s in range(length):
                    rr, cc = r0 + s * dr, c0 + s * dc
                    if 0 <= rr < reach and 0 <= cc < side:
                        img[rr, cc] = 1.0
            # 3x3 dilation gives strokes that still overlap after a one-pixel shift
            pad = np.pad(img, 1)
            protos[c, j] = np.max([pad[a:a + side, b:b + side]
                                   for a in range(3) for b in range(3)], axis=0)
    y = np.arange(n) % n_classes
    y = y[rng.permutation(n)]
    source = y.copy()
    mix = rng.random(n) < shared
    source[mix] = rng.integers(0, n_classes, size=int(mix.sum()))
    which = rng.integers(0, prototypes_per_class, size=n)
    shifts = rng.integers(-1, 2, size=(n, 2))
    X = np.empty((n, side * side))
    for i in range(n):
        img = np.roll(protos[source[i], which[i]], tuple(shifts[i]), axis=(0, 1))
        X[i] = img.ravel()
    X += rng.normal(scale=noise, size=X.shape)
    return Dataset(X, y, n_classes, class_names=tuple(str(c) for c in range(n_classes)))


# ----------------------------------------------------------------------
# CSV I/O
# ----------------------------------------------------------------------

def _parse_float(text, line, column):
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"line {line}, column {column!r}: non-numeric value {text!r}") from None
    if not math.isfinite(v):
        raise ParseError(f"line {line}, column {column!r}: non-finite value {text!r}")
    return v


def _class_order(raw_labels):
    uniq = sorted(set(raw_labels))
    try:
        return sorted(uniq, key=lambda s: (float(s), s))
    except ValueError:
        return uniq


def load_dataset_csv(path, label_column: str = "label", id_column: str = "id") -> Dataset:
    """Read a dataset CSV.

    Labels are re-encoded to ``0..K-1``: numerically when every label
    parses as a number, lexicographically otherwise.  The original label
    strings are kept in ``Dataset.class_names``.  An ``id`` column is used
    for item ids when present, otherwise the 0-based row number.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0]:
        raise ParseError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if label_column not in header:
        raise ParseError(f"{path}: missing label column {label_column!r}")
    body = [r for r in rows[1:] if r and any(cell.strip() for cell in r)]
    if not body:
        raise ParseError(f"{path}: no data rows")
    li = header.index(label_column)
    ii = header.index(id_column) if id_column in header else None
    fcols = [j for j in range(len(header)) if j not in (li, ii)]
    X = np.empty((len(body), len(fcols)))
    raw, ids = [], []
    for r, row in enumerate(body):
        line = r + 2
        if len(row) != len(header):
            raise ParseError(f"line {line}: expected {len(header)} cells, found {len(row)}")
        for c, j in enumerate(fcols):
            X[r, c] = _parse_float(row[j].strip(), line, header[j])
        raw.append(row[li].strip())
        ids.append(row[ii].strip() if ii is not None else str(r))
    classes = _class_order(raw)
    code = {c: k for k, c in enumerate(classes)}
    y = np.array([code[v] for v in raw], dtype=np.intp)
    try:
        return Dataset(X, y, len(classes), np.array(ids), tuple(classes))
    except InvalidArgumentError as exc:
        raise ParseError(f"{path}: {exc}") from None


def save_dataset_csv(ds: Dataset, path) -> None:
    names = ds.class_names if len(ds.class_names) == ds.n_classes else None
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id"] + [f"f{j}" for j in range(ds.n_features)] + ["label"])
        for i in range(ds.n_items):
            lab = names[ds.labels[i]] if names else int(ds.labels[i])
            w.writerow([ds.ids[i]] + [repr(float(v)) for v in ds.features[i]] + [lab])


def load_predictions_csv(path) -> PredictionSet:
    """Read ``id,p0..p{K-1}`` rows.

    A row whose sum is off by at most 1e-6 is renormalized; larger
    deviations and negative entries are rejected with the row id.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0]:
        raise ParseError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    K = len(header) - 1
    if header[0] != "id" or K < 1 or header[1:] != [f"p{k}" for k in range(K)]:
        raise ParseError(f"{path}: header must be id,p0,...,p{{K-1}}; got {','.join(header)}")
    ids, P = [], []
    for r, row in enumerate(rows[1:]):
        if not row or not any(c.strip() for c in row):
            continue
        line = r + 2
        if len(row) != K + 1:
            raise ParseError(f"line {line}: expected {K + 1} cells, found {len(row)}")
        rid = row[0].strip()
        p = np.array([_parse_float(row[k + 1].strip(), line, header[k + 1]) for k in range(K)])
        if np.any(p < 0):
            raise ValidationError(f"row {rid!r}: negative probability")
        s = p.sum()
        if abs(s - 1.0) > RENORMALIZE_TOL:
            raise ValidationError(f"row {rid!r}: probabilities sum to {s:.9g}, not 1")
        if s != 1.0:
            p = p / s
        ids.append(rid)
        P.append(p)
    if not P:
        raise ParseError(f"{path}: no data rows")
    return PredictionSet(np.array(ids), np.vstack(P))


def save_predictions_csv(ids, probs, path, extra: dict | None = None, prefix: str = "p") -> None:
    """Write ``id,{prefix}0..`` rows, optionally followed by extra named columns."""
    probs = np.asarray(probs)
    extra = extra or {}
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id"] + [f"{prefix}{k}" for k in range(probs.shape[1])] + list(extra))
        cols = [np.asarray(v) for v in extra.values()]
        for i, rid in enumerate(ids):
            w.writerow([rid] + [repr(float(v)) for v in probs[i]]
                       + [_fmt(c[i]) for c in cols])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    return v


# ----------------------------------------------------------------------
# splitting and shift
# ----------------------------------------------------------------------

def split(ds: Dataset, spec: SplitSpec):
    """Disjoint uniform random (train, test, cal_pool); leftover items are dropped."""
    total = spec.n_train + spec.n_test + spec.n_cal_pool
    if total > ds.n_items:
        raise InvalidArgumentError(f"split sizes sum to {total} but the dataset has {ds.n_items} items")
    perm = np.random.default_rng(spec.seed).permutation(ds.n_items)
    a, b = spec.n_train, spec.n_train + spec.n_test
    parts = (perm[:a], perm[a:b], perm[b:total])
    return tuple(ds.subset(p) if len(p) else None for p in parts)


def nested_calibration_sets(pool: Dataset, sizes, seed: int = 0) -> list:
    """Prefixes of one shuffle of ``pool``: each set strictly contains the previous one."""
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise InvalidArgumentError("at least one calibration size is required")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise InvalidArgumentError(f"calibration sizes must be strictly ascending: {sizes}")
    if sizes[0] < 1 or sizes[-1] > pool.n_items:
        raise InvalidArgumentError(f"calibration sizes must lie in 1..{pool.n_items}")
    order = np.random.default_rng(seed).permutation(pool.n_items)
    return [pool.subset(order[:s]) for s in sizes]


def rotate_features(X, side: int, k: int = 1) -> np.ndarray:
    """Rotate row-major ``side x side`` images by ``k`` quarter turns counter-clockwise."""
    X = np.asarray(X, dtype=np.float64)
    imgs = X.reshape(-1, side, side)
    return np.rot90(imgs, k=k, axes=(1, 2)).reshape(X.shape[0], side * side)


def rotate90(ds: Dataset, fraction: float, side: int | None = None, seed: int = 0):
    """Rotate a random ``floor(fraction * N)`` subset of items by 90 degrees (CCW).

    Features are read as row-major ``side x side`` images.  Returns the new
    dataset and a boolean mask of rotated items.
    """
    if not 0.0 <= fraction <= 1.0:
        raise InvalidArgumentError("fraction must lie in [0, 1]")
    d = ds.n_features
    if side is None:
        side = int(round(math.isqrt(d)))
    if side * side != d:
        raise InvalidArgumentError(f"{d} features do not form a {side}x{side} image")
    n_rot = int(math.floor(fraction * ds.n_items))
    mask = np.zeros(ds.n_items, dtype=bool)
    if n_rot:
        mask[np.random.default_rng(seed).choice(ds.n_items, size=n_rot, replace=False)] = True
    X = np.array(ds.features)
    if n_rot:
        X[mask] = rotate_features(X[mask], side)
    return Dataset(X, ds.labels, ds.n_classes, ds.ids, ds.class_names), mask
