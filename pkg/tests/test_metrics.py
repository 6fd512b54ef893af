import math

import numpy as np
import pytest

from localcal.errors import InvalidArgumentError, UndefinedCorrelationError
from localcal.metrics import (TrialStats, accuracy, aggregate_trials, best_within_se, brier,
                              improvement_vs_hh, pearson)


class TestBrier:
    def test_hand_value(self):
        assert abs(brier([[0.6, 0.4]], [0]) - 0.32) < 1e-15

    def test_extremes(self):
        assert brier([[1.0, 0.0, 0.0]], [0]) == 0.0
        assert brier([[0.0, 1.0, 0.0]], [0]) == 2.0

    def test_expanded_form(self):
        rng = np.random.default_rng(0)
        P = rng.dirichlet([1, 1, 1, 1], size=50)
        y = rng.integers(0, 4, 50)
        alt = np.mean(1 - 2 * P[np.arange(50), y] + np.sum(P ** 2, axis=1))
        assert abs(brier(P, y) - alt) < 1e-14

    def test_misaligned(self):
        with pytest.raises(InvalidArgumentError):
            brier([[0.5, 0.5]], [0, 1])
        with pytest.raises(InvalidArgumentError):
            brier([[0.5, 0.5]], [2])


class TestAccuracy:
    def test_tie_smallest_class(self):
        assert accuracy([[0.5, 0.5], [0.5, 0.5]], [0, 1]) == 0.5
        assert accuracy([[0.2, 0.4, 0.4]], [1]) == 1.0

    def test_recount(self):
        rng = np.random.default_rng(1)
        P = rng.dirichlet([1, 1, 1], size=40)
        y = rng.integers(0, 3, 40)
        hits = sum(int(max(range(3), key=lambda k: (p[k], -k)) == t) for p, t in zip(P, y))
        assert accuracy(P, y) == hits / 40


class TestPearson:
    def test_perfect(self):
        x = np.arange(5.0)
        assert pearson(x, 3 * x + 1) == 1.0
        assert pearson(x, -x) == -1.0

    def test_textbook(self):
        rng = np.random.default_rng(2)
        x, y = rng.normal(size=30), rng.normal(size=30)
        n = 30
        num = n * sum(a * b for a, b in zip(x, y)) - sum(x) * sum(y)
        den = math.sqrt(n * sum(a * a for a in x) - sum(x) ** 2) * \
            math.sqrt(n * sum(b * b for b in y) - sum(y) ** 2)
        assert abs(pearson(x, y) - num / den) < 1e-12

    def test_constant(self):
        with pytest.raises(UndefinedCorrelationError):
            pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

    def test_too_short(self):
        with pytest.raises(InvalidArgumentError):
            pearson([1.0, 2.0], [1.0, 2.0])

    def test_pairs(self):
        assert improvement_vs_hh([(0.0, 0.0), (0.1, 0.02), (0.2, 0.04)]) == pytest.approx(1.0)


class TestAggregate:
    def test_three_values(self):
        s = aggregate_trials([1.0, 2.0, 3.0])
        assert s.mean == 2.0 and abs(s.se - 1 / math.sqrt(3)) < 1e-15
        assert not s.single_trial and s.n == 3

    def test_single(self):
        s = aggregate_trials([0.4])
        assert s.se == 0.0 and s.single_trial

    def test_empty(self):
        with pytest.raises(InvalidArgumentError):
            aggregate_trials([])

    def test_best_within_se(self):
        stats = {"a": TrialStats((), 0.10, 0.02, False), "b": TrialStats((), 0.115, 0.01, False),
                 "c": TrialStats((), 0.13, 0.0, False)}
        assert best_within_se(stats) == {"a": True, "b": True, "c": False}
        assert best_within_se({}) == {}
