# test_stats.py - Kolmogorov-Smirnov tests over exposure distributions
import numpy as np
import pytest

from src.analysis.fairness.metrics import ExposureDistribution
from src.analysis.fairness.significance import SignificanceMatrix, ks_two_sample, significance_matrix


def _grid_statistic(x, y):
    """sup |F_x - F_y| evaluated on a dense grid plus every sample point."""
    grid = np.union1d(np.linspace(min(x + y) - 1, max(x + y) + 1, 2001), np.array(x + y))
    cdf_x = np.array([np.mean(np.array(x) <= t) for t in grid])
    cdf_y = np.array([np.mean(np.array(y) <= t) for t in grid])
    return float(np.max(np.abs(cdf_x - cdf_y)))


class TestKS:
    def test_identical_samples(self):
        result = ks_two_sample([1, 2, 3], [1, 2, 3])
        assert result.statistic == 0.0
        assert result.p_value == 1.0

    def test_disjoint_supports(self):
        result = ks_two_sample([0, 0, 0], [1, 1])
        assert result.statistic == 1.0
        assert (result.n1, result.n2) == (3, 2)

    def test_hand_computed(self):
        assert ks_two_sample([0.1, 0.2, 0.3, 0.4], [0.3, 0.4, 0.5, 0.6]).statistic == pytest.approx(0.5)

    def test_symmetric(self, rng):
        x, y = rng.normal(size=30), rng.normal(0.5, size=25)
        assert ks_two_sample(x, y).statistic == ks_two_sample(y, x).statistic

    def test_monotone_transform_invariance(self, rng):
        x, y = rng.normal(size=40), rng.normal(0.3, size=35)
        assert ks_two_sample(x, y).statistic == ks_two_sample(np.exp(x), np.exp(y)).statistic

    def test_p_value_decreases_with_statistic(self):
        base = list(range(20))
        p_values = [ks_two_sample(base, [v + shift for v in base]).p_value for shift in (0, 3, 6, 10, 15)]
        assert p_values == sorted(p_values, reverse=True)

    def test_bounds(self, rng):
        for _ in range(50):
            result = ks_two_sample(rng.integers(0, 4, size=7), rng.integers(0, 4, size=5))
            assert 0.0 <= result.statistic <= 1.0
            assert 0.0 <= result.p_value <= 1.0

    def test_matches_dense_grid_on_small_samples(self, rng):
        for _ in range(100):
            x = [float(v) for v in rng.integers(0, 6, size=int(rng.integers(1, 7)))]
            y = [float(v) for v in rng.integers(0, 6, size=int(rng.integers(1, 7)))]
            assert ks_two_sample(x, y).statistic == pytest.approx(_grid_statistic(x, y), abs=1e-12)

    def test_empty_sample(self):
        with pytest.raises(ValueError):
            ks_two_sample([], [1.0])


class TestSignificanceMatrix:
    def test_identical_distributions_not_significant(self):
        dists = {"A": [0.1, 0.2, 0.3], "B": [0.1, 0.2, 0.3]}
        matrix = significance_matrix(dists)
        assert matrix.get("A", "B").p_value == 1.0
        assert not matrix.significant("A", "B")
        assert matrix.alpha == 0.05

    def test_three_groups_three_cells(self, rng):
        dists = {label: ExposureDistribution(label, tuple(rng.random(50))) for label in ("A", "B", "C")}
        matrix = significance_matrix(dists)
        assert matrix.n_comparisons == 3
        assert matrix.get("C", "A") is matrix.get("A", "C")

    def test_shifted_distributions_flagged(self, rng):
        matrix = significance_matrix({"A": rng.normal(size=200), "B": rng.normal(1.0, size=200)})
        assert matrix.significant("B", "A")
        assert matrix.to_dict()["pairs"][0]["significant"] is True

    def test_needs_two_groups(self):
        with pytest.raises(ValueError):
            significance_matrix({"A": [0.1]})

    def test_empty_distribution(self):
        with pytest.raises(ValueError, match="'B'"):
            significance_matrix({"A": [0.1], "B": []})

    @pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1])
    def test_invalid_alpha(self, alpha):
        with pytest.raises(ValueError):
            SignificanceMatrix({}, alpha)
