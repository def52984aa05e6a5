import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import BSpline

from conftest import random_knots
from monospline.basis import (
    DegenerateDomainError,
    DomainError,
    KnotSet,
    basis_matrix,
    curvature_coeffs,
    design_matrix,
    eval_basis,
    first_derivative,
    make_knots,
    second_derivative,
    smoothing_knot_count,
    smoothing_knots,
    spline_value,
)


def _inside(rng, knots, n):
    return rng.uniform(knots.lower, knots.upper, n)


class TestKnotSet:
    def test_augmented_layout(self):
        k = KnotSet.from_breakpoints(0.0, 1.0, [0.25, 0.5])
        np.testing.assert_array_equal(k.augmented, [0, 0, 0, 0, 0.25, 0.5, 1, 1, 1, 1])
        assert k.K == 2 and k.J == 6
        np.testing.assert_array_equal(k.breakpoints, [0, 0.25, 0.5, 1])

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            KnotSet.from_breakpoints(0.0, 1.0, [0.5, 0.2])
        with pytest.raises(ValueError):
            KnotSet.from_breakpoints(1.0, 1.0)

    def test_scaled_to_unit(self):
        k = KnotSet.from_breakpoints(-2.0, 6.0, [0.0, 2.0])
        u = k.scaled_to_unit()
        np.testing.assert_allclose(u.breakpoints, [0, 0.25, 0.5, 1])


class TestKnotPlacement:
    def test_quantile_knots(self):
        x = np.arange(101, dtype=float)
        k = make_knots(x, 4)
        np.testing.assert_allclose(k.interior, [20, 40, 60, 80])
        assert (k.lower, k.upper) == (0.0, 100.0)

    def test_collisions_warn_and_shrink(self):
        x = np.array([0.0] * 10 + [1.0] * 10)
        with pytest.warns(UserWarning, match="collided"):
            k = make_knots(x, 3)
        assert k.K < 3

    def test_degenerate_sample(self):
        with pytest.raises(DegenerateDomainError):
            make_knots(np.ones(5), 2)
        with pytest.raises(DegenerateDomainError):
            smoothing_knots([3.0, 3.0])

    def test_smoothing_knot_count(self):
        assert smoothing_knot_count(30) == 30
        assert smoothing_knot_count(49) == 49
        assert smoothing_knot_count(100) == 62
        assert smoothing_knot_count(200) == 100

    def test_smoothing_knots_n100(self):
        x = np.random.default_rng(0).uniform(-1, 1, 100)
        k = smoothing_knots(x)
        assert k.J == 64
        assert k.lower == x.min() and k.upper == x.max()
        assert np.all(np.isin(k.interior, x))


class TestBasisAgainstScipy:
    def test_matches_scipy_design(self, rng):
        for _ in range(50):
            k = random_knots(rng)
            x = _inside(rng, k, 40)
            ref = BSpline.design_matrix(x, k.augmented, 3).toarray()
            np.testing.assert_allclose(basis_matrix(k, x), ref, atol=1e-13)

    def test_lower_orders_match_scipy(self, rng):
        k = random_knots(rng, K=5)
        x = _inside(rng, k, 30)
        for order in (1, 2, 3):
            t = k.augmented[4 - order : k.augmented.size - 4 + order]
            ref = BSpline.design_matrix(x, t, order - 1).toarray()
            got = basis_matrix(k, x, order)
            # columns that vanish under clamping are dropped by scipy's trimmed knots
            lead = 4 - order
            np.testing.assert_allclose(got[:, lead : lead + ref.shape[1]], ref, atol=1e-13)

    def test_derivatives_match_scipy(self, rng):
        for _ in range(20):
            k = random_knots(rng)
            g = rng.normal(size=k.J)
            x = _inside(rng, k, 25)
            s = BSpline(k.augmented, g, 3)
            np.testing.assert_allclose(spline_value(k, g, x), s(x), atol=1e-11)
            np.testing.assert_allclose(first_derivative(k, g, x), s.derivative(1)(x), rtol=1e-9, atol=1e-9)
            np.testing.assert_allclose(second_derivative(k, g, x), s.derivative(2)(x), rtol=1e-9, atol=1e-8)

    def test_curvature_coeffs_are_knot_values(self, rng):
        k = random_knots(rng, K=4)
        g = rng.normal(size=k.J)
        s2 = BSpline(k.augmented, g, 3).derivative(2)
        np.testing.assert_allclose(6 * curvature_coeffs(k, g), s2(k.breakpoints), rtol=1e-9, atol=1e-9)


class TestBasisInvariants:
    def test_endpoints_interpolate(self):
        k = KnotSet.from_breakpoints(0.0, 2.0, [0.5, 1.5])
        np.testing.assert_allclose(eval_basis(k, 0.0), np.eye(k.J)[0])
        np.testing.assert_allclose(eval_basis(k, 2.0), np.eye(k.J)[-1])

    def test_outside_domain_raises(self):
        k = KnotSet.from_breakpoints(0.0, 1.0)
        with pytest.raises(DomainError, match="outside"):
            basis_matrix(k, [0.5, 1.2])

    def test_bad_order(self):
        with pytest.raises(ValueError):
            basis_matrix(KnotSet.from_breakpoints(0.0, 1.0), [0.5], order=5)

    def test_design_matrix_band_offsets(self, rng):
        k = random_knots(rng, K=6)
        x = _inside(rng, k, 50)
        dm = design_matrix(k, x)
        for row, first in zip(dm.values, dm.first_nonzero):
            nz = np.flatnonzero(row)
            assert nz.min() >= first and nz.max() <= first + 3

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), K=st.integers(0, 12))
    def test_partition_of_unity_and_support(self, seed, K):
        r = np.random.default_rng(seed)
        k = random_knots(r, K=K)
        x = np.concatenate([_inside(r, k, 20), k.breakpoints])
        Bm = basis_matrix(k, x)
        assert np.all(Bm >= -1e-15)
        np.testing.assert_allclose(Bm.sum(axis=1), 1.0, atol=1e-12)
        tau = k.augmented
        for j in range(k.J):
            outside = (x < tau[j]) | (x > tau[j + 4])
            assert np.all(Bm[outside, j] == 0.0)
