import numpy as np
import pytest
import sympy as sp
from scipy.integrate import simpson
from scipy.interpolate import BSpline

from conftest import random_knots
from monospline.basis import KnotSet
from monospline.penalty import FactorizationError, PenaltyMatrix, factorize, penalty_matrix, pivoted_cholesky


def bernstein_omega_symbolic():
    """Gram matrix of second derivatives of the cubic Bernstein polynomials on [0, 1]."""
    t = sp.symbols("t")
    polys = [sp.binomial(3, i) * t**i * (1 - t) ** (3 - i) for i in range(4)]
    d2 = [sp.diff(p, t, 2) for p in polys]
    return np.array([[float(sp.integrate(a * b, (t, 0, 1))) for b in d2] for a in d2])


def simpson_omega(knots, refine=200):
    """Composite Simpson on every knot interval, using scipy's B-spline second derivatives."""
    J = knots.J
    total = np.zeros((J, J))
    bp = knots.breakpoints
    for a, b in zip(bp[:-1], bp[1:]):
        xs = np.linspace(a, b, 2 * refine + 1)
        # nudge the right end inside the interval so the piece on [a, b) is used
        xs[-1] = b - 1e-13 * (b - a)
        D = np.column_stack([BSpline(knots.augmented, np.eye(J)[j], 3).derivative(2)(xs) for j in range(J)])
        total += simpson(D[:, :, None] * D[:, None, :], x=xs, axis=0)
    return total


class TestPenaltyMatrix:
    def test_bernstein_symbolic(self):
        expected = np.array([[12, -18, 0, 6], [-18, 36, -18, 0], [0, -18, 36, -18], [6, 0, -18, 12]], float)
        np.testing.assert_allclose(bernstein_omega_symbolic(), expected, atol=1e-12)
        P = penalty_matrix(KnotSet.from_breakpoints(0.0, 1.0))
        np.testing.assert_allclose(P.omega, expected, atol=1e-10)

    def test_simpson_oracle(self, rng):
        for _ in range(20):
            k = random_knots(rng, K=int(rng.integers(0, 7)))
            got = penalty_matrix(k).omega
            ref = simpson_omega(k)
            np.testing.assert_allclose(got, ref, rtol=1e-9, atol=1e-9 * np.abs(ref).max())

    def test_structure(self, rng):
        k = random_knots(rng, K=8)
        om = penalty_matrix(k).omega
        np.testing.assert_array_equal(om, om.T)
        assert np.all(np.abs(np.triu(om, 4)) == 0)
        w = np.linalg.eigvalsh(om)
        assert np.sum(w < 1e-9 * w.max()) == 2

    def test_linear_functions_in_null_space(self, rng):
        k = random_knots(rng, K=5)
        P = penalty_matrix(k)
        # Greville abscissae reproduce linear functions exactly
        tau = k.augmented
        grev = np.array([tau[j + 1 : j + 4].mean() for j in range(k.J)])
        assert abs(P.quadratic(np.ones(k.J))) < 1e-9
        assert abs(P.quadratic(grev)) < 1e-8 * P.omega.max()

    def test_scaling_with_width(self):
        k = KnotSet.from_breakpoints(0.0, 2.0, [0.5, 1.0])
        u = penalty_matrix(k.scaled_to_unit()).omega
        np.testing.assert_allclose(penalty_matrix(k).omega, u / 8.0, rtol=1e-12)


class TestFactorization:
    def test_rank_and_reconstruction(self, rng):
        for K in (0, 3, 10, 40):
            P = penalty_matrix(random_knots(rng, K=K))
            L = factorize(P)
            assert L.shape == (P.J, P.J - 2)
            assert P.factor is L
            np.testing.assert_allclose(L @ L.T, P.omega, atol=1e-9 * np.abs(P.omega).max())

    def test_pivoted_cholesky_full_rank(self, rng):
        A = rng.normal(size=(6, 6))
        S = A @ A.T + np.eye(6)
        L = pivoted_cholesky(S)
        assert L.shape == (6, 6)
        np.testing.assert_allclose(L @ L.T, S, atol=1e-10)

    def test_zero_matrix(self):
        assert pivoted_cholesky(np.zeros((3, 3))).shape == (3, 0)

    def test_indefinite_input_fails(self):
        P = PenaltyMatrix(omega=np.diag([1.0, -1.0, 1.0]))
        with pytest.raises(FactorizationError):
            factorize(P)
