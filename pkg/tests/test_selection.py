import numpy as np
import pytest

from monospline.basis import make_knots
from monospline.model import SplineModel
from monospline.selection import (
    DEFAULT_K_GRID,
    UndefinedCriterionError,
    criterion,
    cv_folds,
    degrees_of_freedom,
    select_knot_count,
    select_lambda_gcv,
)
from monospline.simbench import generate
from monospline.solver import SplineFit


def fake_fit(n, df, rss):
    # residuals spread evenly so the sum of squares is exactly rss
    fitted = np.full(n, np.sqrt(rss / n))
    return SplineFit(np.arange(df, dtype=float), 0.0, 1, [(j, j + 1) for j in range(df)], df,
                     fitted, 0.0, 0.0), np.zeros(n)


class TestCriteria:
    def test_plug_in_values(self):
        fit, y = fake_fit(100, 5, 1.0)
        assert criterion(fit, y, "AIC") == pytest.approx(10.0, abs=1e-12)
        assert criterion(fit, y, "BIC") == pytest.approx(5 * np.log(100), rel=1e-12)
        assert criterion(fit, y, "BIC") == pytest.approx(23.0259, abs=1e-4)
        assert criterion(fit, y, "gcv") == pytest.approx(1.10803, abs=1e-5)

    def test_gcv_undefined(self):
        fit, y = fake_fit(5, 5, 1.0)
        with pytest.raises(UndefinedCriterionError):
            criterion(fit, y, "GCV")

    def test_unknown(self):
        fit, y = fake_fit(10, 2, 1.0)
        with pytest.raises(ValueError):
            criterion(fit, y, "HQC")

    def test_criteria_share_rss(self):
        fit, y = fake_fit(50, 4, 2.5)
        aic, bic = criterion(fit, y, "AIC"), criterion(fit, y, "BIC")
        assert aic - 2 * 4 == pytest.approx(bic - 4 * np.log(50))


class TestDegreesOfFreedom:
    def test_counts(self):
        x = np.linspace(0, 1, 40)
        m = SplineModel.cubic(x, 3)
        assert degrees_of_freedom(m.fit(2 * x, 0.0)) == m.J
        assert degrees_of_freedom(m.fit(np.full(40, 3.0), 0.0)) == 1
        assert degrees_of_freedom(m.fit(1 - x, 0.0)) == 1

    def test_bounded_by_J(self, rng):
        x = rng.uniform(0, 1, 60)
        m = SplineModel.cubic(x, 6)
        for _ in range(10):
            assert degrees_of_freedom(m.fit(rng.normal(size=60), 0.0)) <= m.J


@pytest.mark.filterwarnings("ignore:.*held-out point")
class TestKnotCount:
    def test_deterministic(self, rng):
        x = rng.uniform(-1, 1, 80)
        y = np.tanh(2 * x) + 0.1 * rng.normal(size=80)
        a = select_knot_count(x, y, seed=3)
        b = select_knot_count(x, y, seed=3)
        np.testing.assert_array_equal(a.scores, b.scores)
        assert a.chosen == b.chosen
        assert a.scores[a.chosen_index] == np.min(a.scores)

    def test_single_k(self, rng):
        x = rng.uniform(0, 1, 40)
        assert select_knot_count(x, x, K_grid=[5]).chosen == 5

    def test_constant_y_prefers_smallest(self, rng):
        x = rng.uniform(0, 1, 60)
        assert select_knot_count(x, np.ones(60)).chosen == min(DEFAULT_K_GRID)

    @pytest.mark.filterwarnings("ignore:.*held-out point")
    def test_spline_truth_prefers_small_k(self):
        knots = make_knots(np.linspace(-1, 1, 101), 2)
        g = np.array([-1.0, -0.8, 0.5, 0.2, 1.0, 1.2])
        hits, ends = 0, 0
        for seed in range(20):
            r = np.random.default_rng(seed)
            x = r.uniform(-1, 1, 100)
            x[:2] = [-1.0, 1.0]
            y = SplineModel.build(x, knots).B @ g + 0.05 * r.normal(size=100)
            k = select_knot_count(x, y, seed=seed).chosen
            hits += k in (2, 4)
            ends += k == max(DEFAULT_K_GRID)
        assert hits > ends

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            select_knot_count([0.0, 1.0, 2.0], [0.0, 1.0, 2.0])

    def test_folds_partition(self):
        parts = cv_folds(11, 2, 0)
        np.testing.assert_array_equal(np.sort(np.concatenate(parts)), np.arange(11))


class TestLambdaGcv:
    def test_single_point_grid(self, rng):
        x = rng.uniform(0, 1, 50)
        r = select_lambda_gcv(x, x + 0.1 * rng.normal(size=50), [0.01])
        assert r.chosen == 0.01

    def test_interior_choice_on_logistic(self):
        interior = 0
        for seed in range(20):
            x, y, _ = generate("logistic", 100, 0.2, seed)
            r = select_lambda_gcv(x, y)
            interior += r.grid[0] < r.chosen < r.grid[-1]
        assert interior >= 14

    def test_wiggly_data_prefers_small_lambda(self):
        r = np.random.default_rng(0)
        x = np.sort(r.uniform(0, 1, 100))
        y = 3 * x + 0.3 * np.sin(40 * x) + 0.02 * r.normal(size=100)
        grid = np.exp([-8.0, -2.0])
        assert select_lambda_gcv(x, y, grid).chosen == grid[0]

    def test_df_at_lambda_zero_is_block_count(self, rng):
        x = rng.uniform(0, 1, 60)
        y = np.sqrt(x) + 0.1 * rng.normal(size=60)
        m = SplineModel.smoothing(x, 12)
        r = select_lambda_gcv(x, y, [0.0], model=m)
        assert r.df_at_chosen == pytest.approx(len(m.fit(y, 0.0).tie_pattern))

    def test_empty_grid(self, rng):
        with pytest.raises(ValueError):
            select_lambda_gcv(rng.uniform(size=10), rng.uniform(size=10), [])
