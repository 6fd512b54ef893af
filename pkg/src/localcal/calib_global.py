"""Global post-hoc calibration maps.

Binary maps (Platt, histogram binning, isotonic) act on a scalar score;
:class:`MarginalMap` lifts them to K classes one-vs-rest.  Temperature
scaling acts on whole probability vectors.  Every map exposes
``apply(probs) -> probs`` on ``(N, K)`` matrices and a JSON-ready
``to_dict()``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_softmax, softmax

from .errors import InvalidArgumentError

CLIP_EPS = 1e-12
T_BOUNDS = (0.05, 20.0)
GOLDEN_TOL = 1e-6


def _binary_labels(labels, n):
    y = np.asarray(labels)
    if y.shape != (n,):
        raise InvalidArgumentError("scores and labels must have the same length")
    if not np.all((y == 0) | (y == 1)):
        raise InvalidArgumentError("binary labels must be 0 or 1")
    return y.astype(np.float64)


def _scores(scores):
    s = np.asarray(scores, dtype=np.float64).ravel()
    if not np.all(np.isfinite(s)):
        raise InvalidArgumentError("scores must be finite")
    return s


def _prob_matrix(probs):
    P = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    if P.shape[1] < 2:
        raise InvalidArgumentError("probability matrices need K >= 2 columns")
    return P


# ---------------------------------------------------------------- Platt

@dataclass(frozen=True)
class PlattMap:
    """``q = 1 / (1 + exp(A * s + B))`` (probability of the positive class)."""

    A: float
    B: float
    n_cal: int = 0
    n_iter: int = 0
    converged: bool = True
    loss_history: tuple = field(default=(), repr=False, compare=False)

    def transform(self, scores) -> np.ndarray:
        f = self.A * _scores(scores) + self.B
        # numerically stable logistic of -f
        out = np.empty_like(f)
        pos = f >= 0
        e = np.exp(-f[pos])
        out[pos] = e / (1.0 + e)
        out[~pos] = 1.0 / (1.0 + np.exp(f[~pos]))
        return out

    def apply(self, probs) -> np.ndarray:
        P = _prob_matrix(probs)
        if P.shape[1] != 2:
            raise InvalidArgumentError("PlattMap.apply expects binary probabilities")
        q = self.transform(P[:, 1])
        return np.column_stack([1.0 - q, q])

    def to_dict(self):
        return {"type": "platt", "parameters": {"A": self.A, "B": self.B},
                "fit": {"n_cal": self.n_cal, "n_iter": self.n_iter, "converged": self.converged}}


def platt_targets(labels):
    """Soft targets ``(n+ + 1)/(n+ + 2)`` for positives and ``1/(n- + 2)`` for negatives."""
    y = np.asarray(labels)
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    hi = (n_pos + 1.0) / (n_pos + 2.0)
    lo = 1.0 / (n_neg + 2.0)
    return np.where(y == 1, hi, lo), hi, lo


def platt_objective(A, B, scores, targets):
    """Cross-entropy of the sigmoid against soft targets (sum over items)."""
    f = A * scores + B
    return float(np.sum(np.where(f >= 0, targets * f + np.log1p(np.exp(-np.abs(f))),
                                 (targets - 1.0) * f + np.log1p(np.exp(-np.abs(f))))))


def fit_platt(scores, labels, max_iter: int = 100, min_step: float = 1e-10,
              sigma: float = 1e-12, tol: float = 1e-10) -> PlattMap:
    """Fit Platt scaling by damped Newton iterations with backtracking.

    Stops when the accepted step has infinity-norm below ``tol`` or after
    ``max_iter`` iterations.  The Hessian is regularized by ``sigma`` on
    its diagonal.
    """
    s = _scores(scores)
    y = _binary_labels(labels, s.size)
    n_pos = int(y.sum())
    n_neg = s.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise InvalidArgumentError("Platt scaling needs both classes in the calibration set")
    t, _, _ = platt_targets(y)
    A, B = 0.0, math.log((n_neg + 1.0) / (n_pos + 1.0))
    fval = platt_objective(A, B, s, t)
    history = [fval]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        f = A * s + B
        # p = P(positive) = 1/(1+exp(f)), q = 1 - p
        p = np.where(f >= 0, np.exp(-np.abs(f)) / (1.0 + np.exp(-np.abs(f))),
                     1.0 / (1.0 + np.exp(-np.abs(f))))
        q = 1.0 - p
        d2 = p * q
        h11 = sigma + float(np.sum(s * s * d2))
        h22 = sigma + float(np.sum(d2))
        h21 = float(np.sum(s * d2))
        d1 = t - p
        g1 = float(np.sum(s * d1))
        g2 = float(np.sum(d1))
        det = h11 * h22 - h21 * h21
        dA = -(h22 * g1 - h21 * g2) / det
        dB = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * dA + g2 * dB
        step = 1.0
        accepted = False
        while step >= min_step:
            nA, nB = A + step * dA, B + step * dB
            nf = platt_objective(nA, nB, s, t)
            if nf < fval + 1e-4 * step * gd:
                accepted = True
                break
            step /= 2.0
        if not accepted:
            # no decrease possible along the Newton direction: at the optimum
            converged = True
            break
        delta = max(abs(nA - A), abs(nB - B))
        A, B, fval = nA, nB, nf
        history.append(fval)
        if delta < tol:
            converged = True
            break
    return PlattMap(float(A), float(B), n_cal=int(s.size), n_iter=it, converged=converged,
                    loss_history=tuple(history))


def apply_platt(pmap: PlattMap, p) -> np.ndarray:
    """Calibrated binary vector ``[1 - q, q]`` for a scalar score or a binary ProbVector."""
    p = np.asarray(p, dtype=np.float64)
    score = p[..., 1] if p.ndim >= 1 and p.shape[-1] == 2 else p
    q = pmap.transform(np.atleast_1d(score))
    out = np.column_stack([1.0 - q, q])
    return out[0] if np.ndim(score) == 0 else out


# ---------------------------------------------------------- temperature

def clipped_logits(probs, eps: float = CLIP_EPS) -> np.ndarray:
    """Per-class log-odds ``ln(p / (1 - p))`` after clipping to ``[eps, 1 - eps]``."""
    P = np.clip(_prob_matrix(probs), eps, 1.0 - eps)
    return np.log(P) - np.log1p(-P)


def temperature_nll(T, logits, labels) -> float:
    """Mean negative log-likelihood of ``softmax(logits / T)``."""
    ls = log_softmax(logits / T, axis=1)
    return float(-np.mean(ls[np.arange(len(labels)), labels]))


@dataclass(frozen=True)
class TemperatureMap:
    """Temperature scaling on clipped per-class log-odds."""

    T: float
    eps: float = CLIP_EPS
    n_cal: int = 0
    bound_hit: str | None = None

    def __post_init__(self):
        if not self.T > 0:
            raise InvalidArgumentError("temperature must be positive")

    def apply(self, probs) -> np.ndarray:
        P = np.asarray(probs, dtype=np.float64)
        single = P.ndim == 1
        out = softmax(clipped_logits(P, self.eps) / self.T, axis=1)
        out /= out.sum(axis=1, keepdims=True)
        return out[0] if single else out

    def to_dict(self):
        return {"type": "temperature", "parameters": {"T": self.T, "eps": self.eps},
                "fit": {"n_cal": self.n_cal, "bound_hit": self.bound_hit}}


def golden_section(fun, lo: float, hi: float, tol: float = GOLDEN_TOL, max_iter: int = 500):
    """Minimize a unimodal scalar function on ``[lo, hi]``; returns ``(x, f(x))``."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return (c, fc) if fc <= fd else (d, fd)


def fit_temperature(probs, labels, eps: float = CLIP_EPS, bounds=T_BOUNDS,
                    tol: float = GOLDEN_TOL) -> TemperatureMap:
    """Golden-section search for ``T`` on a log scale within ``bounds``.

    The returned map records ``bound_hit = "lower"/"upper"`` when the
    optimum sits on an end of the bracket.
    """
    P = _prob_matrix(probs)
    y = np.asarray(labels, dtype=np.intp)
    if y.shape != (P.shape[0],):
        raise InvalidArgumentError("probs and labels must have the same length")
    if np.any(y < 0) or np.any(y >= P.shape[1]):
        raise InvalidArgumentError("labels out of range")
    Z = clipped_logits(P, eps)
    lo, hi = math.log(bounds[0]), math.log(bounds[1])
    obj = lambda u: temperature_nll(math.exp(u), Z, y)
    u, fu = golden_section(obj, lo, hi, tol)
    bound = None
    f_lo, f_hi = obj(lo), obj(hi)
    if f_lo < fu and f_lo <= f_hi:
        u, bound = lo, "lower"
    elif f_hi < fu:
        u, bound = hi, "upper"
    elif u - lo <= tol:
        bound = "lower"
    elif hi - u <= tol:
        bound = "upper"
    return TemperatureMap(float(math.exp(u)), eps, n_cal=int(P.shape[0]), bound_hit=bound)


def apply_temperature(tmap: TemperatureMap, p) -> np.ndarray:
    return tmap.apply(p)


# ------------------------------------------------------------- histogram

@dataclass(frozen=True)
class HistogramMap:
    """Equal-mass binning: left-closed bins ``[edges[i-1], edges[i])`` with outer bins unbounded."""

    edges: np.ndarray
    values: np.ndarray
    counts: np.ndarray
    n_bins_requested: int = 100
    n_cal: int = 0

    @property
    def n_bins(self) -> int:
        return len(self.values)

    def bin_of(self, scores) -> np.ndarray:
        return np.searchsorted(self.edges, _scores(scores), side="right")

    def transform(self, scores) -> np.ndarray:
        return self.values[self.bin_of(scores)]

    def to_dict(self):
        return {"type": "histogram",
                "parameters": {"edges": self.edges.tolist(), "values": self.values.tolist(),
                               "counts": self.counts.tolist()},
                "fit": {"n_cal": self.n_cal, "n_bins_requested": self.n_bins_requested}}


def effective_n_bins(n_cal: int, n_bins: int) -> int:
    """Bin count after the two-items-per-bin reduction rule."""
    return n_bins if n_cal >= 2 * n_bins else max(1, n_cal // 2)


def fit_histogram(scores, labels, n_bins: int = 100) -> HistogramMap:
    """Equal-mass histogram binning; bin value = mean label of its items.

    Interior edges sit at the order statistics ``sorted[i * N // n_bins]``;
    duplicate edges (tied scores) are merged so every bin is nonempty.
    """
    s = _scores(scores)
    y = _binary_labels(labels, s.size)
    N = s.size
    if N < 2:
        raise InvalidArgumentError("histogram binning needs at least 2 calibration items")
    if n_bins < 1:
        raise InvalidArgumentError("n_bins must be >= 1")
    nb = effective_n_bins(N, n_bins)
    srt = np.sort(s)
    cand = srt[(np.arange(1, nb) * N) // nb]
    edges = np.unique(cand)
    edges = edges[edges > srt[0]]
    bins = np.searchsorted(edges, s, side="right")
    counts = np.bincount(bins, minlength=edges.size + 1)
    sums = np.bincount(bins, weights=y, minlength=edges.size + 1)
    return HistogramMap(edges, sums / counts, counts, int(n_bins), int(N))


# -------------------------------------------------------------- isotonic

@dataclass(frozen=True)
class IsotonicMap:
    """Nondecreasing step function; ``values[i]`` holds on ``[x[i], x[i+1])``."""

    x: np.ndarray
    values: np.ndarray
    n_cal: int = 0

    def transform(self, scores) -> np.ndarray:
        i = np.searchsorted(self.x, _scores(scores), side="right") - 1
        return self.values[np.clip(i, 0, self.x.size - 1)]

    def to_dict(self):
        return {"type": "isotonic",
                "parameters": {"x": self.x.tolist(), "values": self.values.tolist()},
                "fit": {"n_cal": self.n_cal}}


def pav(y, w=None) -> np.ndarray:
    """Weighted pool-adjacent-violators: nondecreasing least-squares fit to ``y``."""
    y = np.asarray(y, dtype=np.float64)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=np.float64)
    means, weights, sizes = [], [], []
    for v, wt in zip(y, w):
        means.append(v)
        weights.append(wt)
        sizes.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, w2, n2 = means.pop(), weights.pop(), sizes.pop()
            wsum = weights[-1] + w2
            means[-1] = (means[-1] * weights[-1] + m2 * w2) / wsum
            weights[-1] = wsum
            sizes[-1] += n2
    return np.repeat(means, sizes)


def fit_isotonic(scores, labels) -> IsotonicMap:
    """Isotonic regression of labels on scores; tied scores are pooled first."""
    s = _scores(scores)
    y = _binary_labels(labels, s.size)
    if s.size < 1:
        raise InvalidArgumentError("isotonic regression needs at least one item")
    ux, inv = np.unique(s, return_inverse=True)
    w = np.bincount(inv).astype(np.float64)
    ybar = np.bincount(inv, weights=y) / w
    fitted = pav(ybar, w)
    return IsotonicMap(ux, fitted, int(s.size))


# -------------------------------------------------------- multi-class lift

@dataclass(frozen=True)
class MarginalMap:
    """One-vs-rest lift of a binary map family.

    For ``K == 2`` a single map acts on ``p[:, 1]``; otherwise map ``k``
    acts on ``p[:, k]`` and rows are renormalized (all-zero rows become
    uniform).
    """

    kind: str
    maps: tuple

    def apply(self, probs) -> np.ndarray:
        P = _prob_matrix(probs)
        single = np.ndim(probs) == 1
        if len(self.maps) == 1:
            q = self.maps[0].transform(P[:, 1])
            out = np.column_stack([1.0 - q, q])
        else:
            if P.shape[1] != len(self.maps):
                raise InvalidArgumentError("class count differs from the fitted maps")
            out = np.column_stack([m.transform(P[:, k]) for k, m in enumerate(self.maps)])
            out = normalize_rows(out)
        return out[0] if single else out

    def to_dict(self):
        return {"type": "marginal", "kind": self.kind, "maps": [m.to_dict() for m in self.maps]}


def normalize_rows(Q) -> np.ndarray:
    """Divide rows by their sums; rows summing to zero become uniform."""
    Q = np.asarray(Q, dtype=np.float64)
    tot = Q.sum(axis=1, keepdims=True)
    K = Q.shape[1]
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(tot > 0, Q / np.where(tot > 0, tot, 1.0), 1.0 / K)
    return out


_BINARY_FITTERS = {
    "platt": fit_platt,
    "hist": fit_histogram,
    "isotonic": fit_isotonic,
}


def fit_marginal(kind: str, probs, labels, **kw) -> MarginalMap:
    P = _prob_matrix(probs)
    y = np.asarray(labels)
    fitter = _BINARY_FITTERS[kind]
    if P.shape[1] == 2:
        return MarginalMap(kind, (fitter(P[:, 1], (y == 1).astype(int), **kw),))
    return MarginalMap(kind, tuple(fitter(P[:, k], (y == k).astype(int), **kw)
                                   for k in range(P.shape[1])))


def apply_multiclass_marginal(mmap: MarginalMap, p) -> np.ndarray:
    return mmap.apply(p)


GLOBAL_CALIBRATORS = ("platt", "temp", "hist", "isotonic")


def fit_global(kind: str, probs, labels, n_bins: int = 100):
    """Fit a global map by name: ``platt``, ``temp``, ``hist`` or ``isotonic``."""
    if kind == "temp":
        return fit_temperature(probs, labels)
    if kind == "hist":
        return fit_marginal("hist", probs, labels, n_bins=n_bins)
    if kind in ("platt", "isotonic"):
        return fit_marginal(kind, probs, labels)
    raise InvalidArgumentError(f"unknown global calibrator {kind!r}")


def default_global(n_classes: int) -> str:
    """Platt for binary problems, temperature scaling otherwise."""
    return "platt" if n_classes == 2 else "temp"


def map_from_dict(d):
    t = d["type"]
    p = d.get("parameters", {})
    fit = d.get("fit", {})
    if t == "platt":
        return PlattMap(float(p["A"]), float(p["B"]), n_cal=int(fit.get("n_cal", 0)),
                        n_iter=int(fit.get("n_iter", 0)), converged=bool(fit.get("converged", True)))
    if t == "temperature":
        return TemperatureMap(float(p["T"]), float(p.get("eps", CLIP_EPS)),
                              n_cal=int(fit.get("n_cal", 0)), bound_hit=fit.get("bound_hit"))
    if t == "histogram":
        return HistogramMap(np.asarray(p["edges"], dtype=np.float64),
                            np.asarray(p["values"], dtype=np.float64),
                            np.asarray(p["counts"], dtype=np.int64),
                            int(fit.get("n_bins_requested", 100)), int(fit.get("n_cal", 0)))
    if t == "isotonic":
        return IsotonicMap(np.asarray(p["x"], dtype=np.float64),
                           np.asarray(p["values"], dtype=np.float64), int(fit.get("n_cal", 0)))
    if t == "marginal":
        return MarginalMap(d["kind"], tuple(map_from_dict(m) for m in d["maps"]))
    raise InvalidArgumentError(f"unknown calibration map type {t!r}")
