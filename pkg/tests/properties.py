"""Hypothesis properties for the invariant suite.

Each property counts its executed examples in ``CALLS`` so the acceptance
suite can confirm the case budget was actually spent.
"""

from collections import Counter

import numpy as np
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from localcal.calib_global import fit_global, fit_histogram, TemperatureMap
from localcal.dataio import Dataset
from localcal.hh import hellinger, hellinger_norm, hh_from_predictions, hidden_heterogeneity
from localcal.metrics import brier
from localcal.simcalib import (build_similarity_model, sba_calibrate, swc_calibrate,
                               swc_hh_calibrate)

N_CASES = 1000
CALLS = Counter()

SETTINGS = settings(max_examples=N_CASES, deadline=None, derandomize=True, database=None,
                    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large,
                                           HealthCheck.filter_too_much])

unit = st.floats(0.0, 1.0, allow_nan=False)


@st.composite
def prob_matrix(draw, n=None, K=None, min_n=1, max_n=12, min_K=2, max_K=4):
    n = draw(st.integers(min_n, max_n)) if n is None else n
    K = draw(st.integers(min_K, max_K)) if K is None else K
    W = np.array(draw(st.lists(st.lists(unit, min_size=K, max_size=K), min_size=n, max_size=n)))
    W[W.sum(axis=1) == 0] = 1.0
    return W / W.sum(axis=1, keepdims=True)


@st.composite
def labelled(draw, min_n=1, max_n=12, max_K=4, cover=False):
    P = draw(prob_matrix(min_n=min_n, max_n=max_n, max_K=max_K))
    n, K = P.shape
    y = np.array(draw(st.lists(st.integers(0, K - 1), min_size=n, max_size=n)))
    if cover:
        assume(n >= K)
        y[:K] = np.arange(K)
    return P, y


@st.composite
def cal_problem(draw):
    """Small calibration set with coarse features (to provoke ties) and a test item."""
    P, y = draw(labelled(min_n=1, max_n=10))
    n, K = P.shape
    d = draw(st.integers(1, 3))
    coarse = st.sampled_from([-1.0, 0.0, 0.5, 2.0])
    X = np.array(draw(st.lists(st.lists(coarse, min_size=d, max_size=d), min_size=n,
                               max_size=n)))
    x_t = np.array(draw(st.lists(coarse, min_size=d, max_size=d)))
    p_t = draw(prob_matrix(n=1, K=K))[0]
    seed = draw(st.integers(0, 2 ** 32))
    return Dataset(X, y, K), P, x_t, p_t, seed


def _is_simplex(Q):
    return bool(np.all(Q >= 0) and np.all(np.abs(Q.sum(axis=-1) - 1.0) <= 1e-12))


@SETTINGS
@given(labelled(min_n=2, max_n=15, cover=True), st.sampled_from(["platt", "temp", "hist",
                                                                   "isotonic"]),
       st.integers(1, 12))
def prop_global_outputs_simplex(data, kind, n_bins):
    CALLS["global_simplex"] += 1
    P, y = data
    assert _is_simplex(fit_global(kind, P, y, n_bins=n_bins).apply(P))


@SETTINGS
@given(cal_problem(), st.floats(0.0, 2.0), st.booleans(), st.data())
def prop_local_outputs_simplex(problem, hh, weighted, data):
    CALLS["local_simplex"] += 1
    cal, P, x_t, p_t, seed = problem
    model = build_similarity_model(cal, P, seed=seed, n_trees=3)
    assert _is_simplex(swc_calibrate(model, x_t, p_t))
    assert _is_simplex(swc_hh_calibrate(model, x_t, p_t, hh))
    k = data.draw(st.integers(1, cal.n_items))
    assert _is_simplex(sba_calibrate(cal, P, x_t, p_t, k=k, weighted=weighted))


@SETTINGS
@given(prob_matrix(max_n=6, max_K=6), st.floats(0.05, 20.0))
def prop_temperature_argmax(P, T):
    CALLS["temperature_argmax"] += 1
    top2 = np.sort(P, axis=1)[:, -2:]
    # near-ties can round to equal outputs; exact ties are covered separately
    assume(np.all((top2[:, 1] - top2[:, 0] > 1e-6) | (top2[:, 1] == top2[:, 0])))
    Q = TemperatureMap(T).apply(P)
    assert _is_simplex(Q)
    assert np.array_equal(Q.argmax(axis=1), P.argmax(axis=1))


@SETTINGS
@given(labelled(max_n=10), st.data())
def prop_hh_range_and_clip(data, draw):
    CALLS["hh_range"] += 1
    F, y = data
    G = draw.draw(prob_matrix(n=F.shape[0], K=F.shape[1]))
    hh, bf, bg = hh_from_predictions(F, G, y)
    assert 0.0 <= hh <= 2.0
    assert hh == max(0.0, bf - bg)
    assert bf == brier(F, y) and bg == brier(G, y)


@SETTINGS
@given(cal_problem(), st.floats(0.0, 1.0))
def prop_hh_estimator_range(problem, r):
    CALLS["hh_estimator"] += 1
    cal, P, _, p_t, seed = problem
    e = hidden_heterogeneity(p_t, cal, P, r=r, seed=seed % 1000)
    assert 0.0 <= e.hh <= 2.0
    assert e.hh == max(0.0, e.brier_f - e.brier_g)


@SETTINGS
@given(cal_problem())
def prop_swc_hh_zero_is_swc(problem):
    CALLS["swc_hh_zero"] += 1
    cal, P, x_t, p_t, seed = problem
    model = build_similarity_model(cal, P, seed=seed, n_trees=4)
    assert np.array_equal(swc_hh_calibrate(model, x_t, p_t, 0.0), swc_calibrate(model, x_t, p_t))


@SETTINGS
@given(st.lists(st.tuples(st.floats(0.0, 1.0), st.integers(0, 1)), min_size=2, max_size=40),
       st.integers(1, 20))
def prop_histogram_bins_exact(pairs, n_bins):
    CALLS["histogram_exact"] += 1
    s = np.array([p[0] for p in pairs])
    y = np.array([p[1] for p in pairs])
    hm = fit_histogram(s, y, n_bins=n_bins)
    q = hm.transform(s)
    b = hm.bin_of(s)
    for k in np.unique(b):
        assert abs(q[b == k].sum() - y[b == k].sum()) <= 1e-12 * max(1, (b == k).sum())


@SETTINGS
@given(labelled(max_n=10, max_K=5), st.data())
def prop_brier_and_hellinger_forms(data, draw):
    CALLS["brier_hellinger"] += 1
    P, y = data
    b = brier(P, y)
    assert 0.0 <= b <= 2.0
    alt = np.mean(1 - 2 * P[np.arange(len(y)), y] + np.sum(P ** 2, axis=1))
    assert abs(b - alt) <= 1e-12
    q = draw.draw(prob_matrix(n=1, K=P.shape[1]))[0]
    d1, d2 = hellinger(P[0], q), hellinger_norm(P[0], q)
    assert 0.0 <= d1 <= 1.0 and abs(d1 - d2) <= 1e-12


PROPERTIES = {
    "global_simplex": prop_global_outputs_simplex,
    "local_simplex": prop_local_outputs_simplex,
    "temperature_argmax": prop_temperature_argmax,
    "hh_range": prop_hh_range_and_clip,
    "hh_estimator": prop_hh_estimator_range,
    "swc_hh_zero": prop_swc_hh_zero_is_swc,
    "histogram_exact": prop_histogram_bins_exact,
    "brier_hellinger": prop_brier_and_hellinger_forms,
}
