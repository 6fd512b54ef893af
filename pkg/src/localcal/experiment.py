"""Pipeline helpers shared by the CLI and the benchmark harness."""

from __future__ import annotations

import hashlib

import numpy as np

from .calib_global import GLOBAL_CALIBRATORS, default_global, fit_global
from .dataio import SplitSpec, nested_calibration_sets, split
from .errors import InvalidArgumentError
from .hh import DEFAULT_RADIUS, HiddenHeterogeneity
from .metrics import accuracy, aggregate_trials, best_within_se, brier
from .refmodels import fit_gnb, fit_logit
from .simcalib import (build_similarity_model, calibration_support, sba_calibrate,
                       swc_calibrate, swc_hh_calibrate)
from .trees import TreeParams, fit_forest, fit_tree

REFERENCE_MODELS = ("dt", "rf", "gnb", "logit")
LOCAL_CALIBRATORS = ("sba10", "sbaw10", "swc", "swc-hh")
ALL_CALIBRATORS = GLOBAL_CALIBRATORS + LOCAL_CALIBRATORS
DT_MIN_SAMPLES_LEAF = 10
RF_TREES = 200


def derive_seed(master: int, *keys) -> int:
    """63-bit seed from a master seed and a path of keys.

    Each consumer (trial, model, calibrator, ...) hashes its own key path,
    so adding a consumer never shifts another consumer's stream.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master)).encode())
    for k in keys:
        h.update(b"/")
        h.update(str(k).encode())
    return int.from_bytes(h.digest(), "little") >> 1


def fit_reference(name: str, train, seed: int = 0):
    """Fit a built-in reference classifier; the result has ``predict_proba``."""
    if name == "dt":
        return fit_tree(train, TreeParams(min_samples_leaf=DT_MIN_SAMPLES_LEAF, seed=seed))
    if name == "rf":
        return fit_forest(train, n_trees=RF_TREES, seed=seed)
    if name == "gnb":
        return fit_gnb(train)
    if name == "logit":
        return fit_logit(train)
    raise InvalidArgumentError(f"unknown model {name!r}; choose from {', '.join(REFERENCE_MODELS)}")


def resolve_global(name: str, n_classes: int, override: str | None = None) -> str:
    """``platt``/``temp`` requests honour an explicit override, else pick by class count."""
    if override:
        return override
    if name in ("platt", "temp"):
        return name
    return default_global(n_classes)


def run_calibrators(calibrators, cal, cal_probs, test, test_probs, seed: int = 0,
                    radius: float = DEFAULT_RADIUS, n_bins: int = 100, hh_model=None,
                    sim_model=None):
    """Apply each named calibrator to the test predictions.

    Returns ``(outputs, extras)`` where ``outputs[name]`` is an ``(n_test, K)``
    matrix and ``extras`` may hold ``hh`` (per-test-item HH values), the
    ``hh_report`` and the similarity model.
    """
    outputs, extras = {}, {}
    need_sim = any(c in ("swc", "swc-hh") for c in calibrators)
    if need_sim and sim_model is None:
        sim_model = build_similarity_model(cal, cal_probs, seed=derive_seed(seed, "similarity"))
    if sim_model is not None:
        extras["sim_model"] = sim_model
    for name in calibrators:
        if name in GLOBAL_CALIBRATORS:
            m = fit_global(name, cal_probs, cal.labels, n_bins=n_bins)
            outputs[name] = m.apply(test_probs)
            extras[f"{name}_map"] = m
        elif name == "sba10":
            outputs[name] = sba_calibrate(cal, cal_probs, test.features, test_probs, 10, False)
        elif name == "sbaw10":
            outputs[name] = sba_calibrate(cal, cal_probs, test.features, test_probs, 10, True)
        elif name == "swc":
            outputs[name] = swc_calibrate(sim_model, test.features, test_probs)
        elif name == "swc-hh":
            if "hh" not in extras:
                est = hh_model or HiddenHeterogeneity(cal, cal_probs, radius,
                                                      derive_seed(seed, "hh"))
                rep = est.report(test_probs, test.ids)
                extras["hh_report"] = rep
                extras["hh"] = rep.hh
            outputs[name] = swc_hh_calibrate(sim_model, test.features, test_probs, extras["hh"])
        else:
            raise InvalidArgumentError(
                f"unknown calibrator {name!r}; choose from {', '.join(ALL_CALIBRATORS)}")
    return outputs, extras


def support_of(sim_model, test, test_probs) -> np.ndarray:
    return calibration_support(sim_model, test.features, test_probs)


UNCALIBRATED = "uncal"


def trial_split(ds, trial: int, seed: int, n_train: int, n_test: int):
    """Train/test/pool split of one trial; the pool holds every remaining item."""
    spec = SplitSpec(n_train, n_test, ds.n_items - n_train - n_test,
                     derive_seed(seed, "split", trial))
    return split(ds, spec)


def run_trial(ds, models, calibrators, cal_sizes, trial: int, seed: int = 0,
              n_train: int = 500, n_test: int = 500, radius: float = DEFAULT_RADIUS,
              n_bins: int = 100, with_hh: bool = False):
    """One benchmark trial over models x nested calibration sizes x calibrators.

    Returns a list of row dicts with keys ``model, calibrator, cal_size,
    trial, brier, accuracy`` (plus ``mean_hh`` when computed).  The
    uncalibrated predictions appear as calibrator ``"uncal"``.
    """
    train, test, pool = trial_split(ds, trial, seed, n_train, n_test)
    if pool is None or pool.n_items < max(cal_sizes):
        raise InvalidArgumentError("calibration pool is smaller than the largest calibration size")
    cal_sets = nested_calibration_sets(pool, cal_sizes, derive_seed(seed, "nested", trial))
    need_hh = with_hh or "swc-hh" in calibrators
    rows = []
    for name in models:
        model = fit_reference(name, train, derive_seed(seed, "model", name, trial))
        p_test = model.predict_proba(test.features)
        for size, cal in zip(cal_sizes, cal_sets):
            p_cal = model.predict_proba(cal.features)
            base = {"model": name, "cal_size": int(size), "trial": int(trial)}
            cseed = derive_seed(seed, "calibrate", name, trial, size)
            hh_model = None
            extra = {}
            if need_hh:
                hh_model = HiddenHeterogeneity(cal, p_cal, radius, derive_seed(cseed, "hh"))
                rep = hh_model.report(p_test, test.ids)
                extra["mean_hh"] = rep.mean_hh
            rows.append({**base, "calibrator": UNCALIBRATED, "brier": brier(p_test, test.labels),
                         "accuracy": accuracy(p_test, test.labels), **extra})
            outs, _ = run_calibrators(calibrators, cal, p_cal, test, p_test, seed=cseed,
                                      radius=radius, n_bins=n_bins, hh_model=hh_model)
            for cname in calibrators:
                q = outs[cname]
                rows.append({**base, "calibrator": cname, "brier": brier(q, test.labels),
                             "accuracy": accuracy(q, test.labels), **extra})
    return rows


def summarize(rows):
    """Aggregate trial rows into per-(model, calibrator, cal_size) statistics.

    Each summary row carries TrialStats for Brier score and accuracy, the
    mean HH (when present) and a ``best`` flag: within one standard error
    of the lowest mean Brier among calibrators of the same model and
    calibration size.
    """
    groups = {}
    for r in rows:
        groups.setdefault((r["model"], r["cal_size"], r["calibrator"]), []).append(r)
    out = []
    by_cell = {}
    for (m, size, c), rs in groups.items():
        rs = sorted(rs, key=lambda r: r["trial"])
        entry = {"model": m, "cal_size": size, "calibrator": c,
                 "brier": aggregate_trials([r["brier"] for r in rs]),
                 "accuracy": aggregate_trials([r["accuracy"] for r in rs])}
        if "mean_hh" in rs[0]:
            entry["mean_hh"] = float(np.mean([r["mean_hh"] for r in rs]))
        out.append(entry)
        by_cell.setdefault((m, size), {})[c] = entry["brier"]
    flags = {cell: best_within_se(stats) for cell, stats in by_cell.items()}
    for e in out:
        e["best"] = flags[(e["model"], e["cal_size"])][e["calibrator"]]
    out.sort(key=lambda e: (e["model"], e["cal_size"], e["calibrator"]))
    return out
