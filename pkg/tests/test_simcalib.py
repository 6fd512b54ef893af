import math

import numpy as np
import pytest
from oracles import swc_brute

from localcal.dataio import Dataset, make_moons
from localcal.errors import InvalidArgumentError, ValidationError
from localcal.experiment import fit_reference
from localcal.simcalib import (SimilarityModel, SupportReport, augment,
                               build_similarity_model, calibration_support, sba_calibrate,
                               similarities, support_histogram, swc_calibrate,
                               swc_hh_calibrate, write_support_histogram)
from localcal.trees import TreeParams


class StubForest:
    """Routes every query to a fixed leaf vector."""

    def __init__(self, test_leaves):
        self.test_leaves = np.asarray(test_leaves, dtype=np.int64)
        self.n_trees = self.test_leaves.size

    def leaf_indices(self, A):
        return np.tile(self.test_leaves, (np.atleast_2d(A).shape[0], 1))


def stub_model(sims, labels, n_trees=20, K=2):
    """Model whose similarity to every query is exactly ``sims``."""
    N = len(sims)
    cal_leaves = np.zeros((N, n_trees), dtype=np.int64)
    for i, s in enumerate(sims):
        m = int(round(s * n_trees))
        cal_leaves[i, m:] = 1 + i
    cal_aug = np.column_stack([np.arange(N, dtype=float), np.tile([0.5, 0.5], (N, 1))])
    return SimilarityModel(StubForest(np.zeros(n_trees)), cal_aug, np.asarray(labels),
                           np.arange(N).astype(str), cal_leaves, 1, K, 0)


@pytest.fixture(scope="module")
def moons_model():
    ds = make_moons(400, seed=3)
    ref = fit_reference("gnb", ds.subset(np.arange(300, 400)))
    cal = ds.subset(np.arange(200))
    test = ds.subset(np.arange(200, 230))
    model = build_similarity_model(cal, ref.predict_proba(cal.features), seed=4, n_trees=30)
    return model, cal, test, ref.predict_proba(test.features)


class TestSWC:
    def test_brute_force(self, moons_model):
        model, cal, test, Pt = moons_model
        Q = swc_calibrate(model, test.features, Pt)
        for t in range(test.n_items):
            a_t = augment(test.features[t:t + 1], Pt[t:t + 1])
            q, sims = swc_brute(model.forest, model.cal_aug, cal.labels, a_t, 2)
            assert np.max(np.abs(Q[t] - q)) < 1e-12
            assert np.max(np.abs(similarities(model, test.features[t], Pt[t]) - sims)) < 1e-15

    def test_equal_sims_give_frequencies(self):
        X = np.zeros((5, 2))
        cal = Dataset(X, [0, 1, 1, 0, 1], 2)
        P = np.tile([0.3, 0.7], (5, 1))
        model = build_similarity_model(cal, P, seed=0, n_trees=10)
        np.testing.assert_allclose(swc_calibrate(model, [0.0, 0.0], [0.3, 0.7]), [0.4, 0.6])

    def test_one_nonzero(self):
        model = stub_model([0.0, 0.35, 0.0], [1, 0, 1])
        assert swc_calibrate(model, [0.0], [0.5, 0.5]).tolist() == [1.0, 0.0]

    def test_two_items(self):
        model = stub_model([0.75, 0.25], [0, 1])
        np.testing.assert_allclose(swc_calibrate(model, [0.0], [0.5, 0.5]), [0.75, 0.25])

    def test_zero_support_nearest(self):
        model = stub_model([0.0, 0.0, 0.0], [0, 1, 0])
        model.cal_aug[:] = [[0.0, 0.5, 0.5], [5.0, 0.5, 0.5], [9.0, 0.5, 0.5]]
        assert swc_calibrate(model, [4.0], [0.5, 0.5]).tolist() == [0.0, 1.0]

    def test_simplex_and_shape(self, moons_model):
        model, cal, test, Pt = moons_model
        Q = swc_calibrate(model, test.features, Pt)
        assert Q.shape == (test.n_items, 2)
        assert np.all(Q >= 0) and np.allclose(Q.sum(1), 1.0)

    def test_bad_input(self, moons_model):
        model, _, test, Pt = moons_model
        with pytest.raises(InvalidArgumentError):
            swc_calibrate(model, test.features[:, :1], Pt)
        with pytest.raises(ValidationError):
            swc_calibrate(model, test.features, Pt * 2)

    def test_feature_count_rule(self):
        assert TreeParams(max_features="sqrt").n_candidate_features(786) == 29
        assert TreeParams(max_features="sqrt").n_candidate_features(4) == 2


class TestSupport:
    def test_brute_force(self, moons_model):
        model, _, test, Pt = moons_model
        sup = calibration_support(model, test.features, Pt)
        for t in range(5):
            a_t = augment(test.features[t:t + 1], Pt[t:t + 1])
            _, sims = swc_brute(model.forest, model.cal_aug, model.cal_labels, a_t, 2)
            assert abs(sup[t] - sum(sims)) < 1e-12

    def test_identical_cal(self):
        cal = Dataset(np.ones((7, 2)), [0, 1, 0, 1, 0, 1, 1], 2)
        model = build_similarity_model(cal, np.tile([0.5, 0.5], (7, 1)), n_trees=8)
        assert calibration_support(model, [1.0, 1.0], [0.5, 0.5]) == 7.0

    def test_bounds(self, moons_model):
        model, _, test, Pt = moons_model
        sup = calibration_support(model, test.features, Pt)
        assert np.all((sup >= 0) & (sup <= model.n_cal))

    def test_histogram(self, tmp_path):
        rows = support_histogram([0.5, 1.5, 2.5, 3.5], [0.5, 0.6], bins=4, upper=4)
        assert [r[2] for r in rows] == [1, 1, 1, 1]
        assert [r[3] for r in rows] == [2, 0, 0, 0]
        write_support_histogram(rows, tmp_path / "h.csv")
        assert (tmp_path / "h.csv").read_text().splitlines()[0] == \
            "bin_left,bin_right,count_unshifted,count_shifted"

    def test_report_summary(self):
        rep = SupportReport(np.array(["a", "b", "c"]), np.array([3.0, 1.0, 2.0]),
                            np.array([False, True, True]))
        s = rep.summary()
        assert s["mean_support"] == 2.0 and s["mean_support_rotated"] == 1.5
        assert s["mean_support_unrotated"] == 3.0


class TestSWCHH:
    def test_zero_hh_equals_swc(self, moons_model):
        model, _, test, Pt = moons_model
        np.testing.assert_array_equal(swc_hh_calibrate(model, test.features, Pt, 0.0),
                                      swc_calibrate(model, test.features, Pt))

    def test_threshold(self):
        model = stub_model([0.6, 0.4, 0.3], [0, 1, 1])
        assert swc_hh_calibrate(model, [0.0], [0.5, 0.5], 1.0).tolist() == [1.0, 0.0]
        np.testing.assert_allclose(swc_hh_calibrate(model, [0.0], [0.5, 0.5], 0.0),
                                   [0.6 / 1.3, 0.7 / 1.3])

    def test_threshold_inclusive(self):
        model = stub_model([0.5, 0.4], [1, 0])
        assert swc_hh_calibrate(model, [0.0], [0.5, 0.5], 1.0).tolist() == [0.0, 1.0]

    def test_fallback_most_similar(self):
        model = stub_model([0.3, 0.6, 0.6], [0, 1, 0])
        assert swc_hh_calibrate(model, [0.0], [0.5, 0.5], 2.0).tolist() == [0.0, 1.0]

    def test_invalid_hh(self):
        model = stub_model([0.5], [0])
        for bad in (-0.1, 2.1, math.nan):
            with pytest.raises(InvalidArgumentError):
                swc_hh_calibrate(model, [0.0], [0.5, 0.5], bad)


class TestSBA:
    def test_all_neighbours(self):
        ds = make_moons(30, seed=1)
        P = np.tile([0.5, 0.5], (30, 1))
        q = sba_calibrate(ds, P, [0.0, 0.0], [0.5, 0.5], k=30)
        np.testing.assert_allclose(q, np.bincount(ds.labels, minlength=2) / 30)

    def test_weighted_zero_distance(self):
        cal = Dataset(np.array([[0.0], [1.0], [2.0]]), [1, 0, 0], 2)
        P = np.tile([0.5, 0.5], (3, 1))
        q = sba_calibrate(cal, P, [0.0], [0.5, 0.5], k=3, weighted=True)
        assert q[1] > 1 - 1e-10

    @pytest.mark.parametrize("seed", range(4))
    def test_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.integers(0, 3, size=(25, 2)).astype(float)
        cal = Dataset(X, rng.integers(0, 3, 25), 3)
        P = rng.dirichlet([1, 1, 1], size=25)
        x, p = rng.normal(size=2), rng.dirichlet([1, 1, 1])
        C = np.hstack([X, P])
        a = np.concatenate([x, p])
        d = [math.sqrt(sum((ci - ai) ** 2 for ci, ai in zip(c, a))) for c in C]
        nb = sorted(range(25), key=lambda i: (d[i], str(i)))[:3]
        ref = np.bincount(cal.labels[nb], minlength=3) / 3
        np.testing.assert_allclose(sba_calibrate(cal, P, x, p, k=3), ref)

    def test_tie_by_id(self):
        cal = Dataset(np.array([[1.0], [-1.0]]), [0, 1], 2, ids=["b", "a"])
        P = np.tile([0.5, 0.5], (2, 1))
        assert sba_calibrate(cal, P, [0.0], [0.5, 0.5], k=1).tolist() == [0.0, 1.0]

    def test_bad_k(self):
        ds = make_moons(5)
        with pytest.raises(InvalidArgumentError):
            sba_calibrate(ds, np.tile([0.5, 0.5], (5, 1)), [0.0, 0.0], [0.5, 0.5], k=6)
