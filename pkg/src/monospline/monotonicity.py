"""Monotonicity conditions for cubic B-spline coefficient vectors.

Three encodings are provided, nested from strictest to loosest:

* sorted coefficients (``A @ gamma <= 0``), the one used for fitting;
* exact monotonicity, checked where ``f'`` can attain its minimum;
* non-negative derivative at every knot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import KnotSet, basis_matrix, curvature_coeffs, first_derivative


def difference_matrix(J: int) -> np.ndarray:
    """``(J-1, J)`` matrix with rows ``(..., 1, -1, ...)``."""
    A = np.zeros((J - 1, J))
    idx = np.arange(J - 1)
    A[idx, idx] = 1.0
    A[idx, idx + 1] = -1.0
    return A


@dataclass(frozen=True)
class ConditionMatrices:
    A: np.ndarray
    D: np.ndarray
    B1: np.ndarray
    necessary: np.ndarray


@dataclass(frozen=True)
class MonotoneVerdict:
    is_monotone: bool
    evaluation_set: np.ndarray
    min_derivative: float
    tolerance: float


def sufficient_holds(gamma) -> bool:
    gamma = np.asarray(gamma, dtype=float)
    if gamma.size < 2:
        raise ValueError("need at least two coefficients")
    return bool(np.all(np.diff(gamma) >= 0))


def necessary_matrix(knots: KnotSet) -> ConditionMatrices:
    """Matrices for the knot-derivative condition ``B1 @ inv(D) @ A @ gamma <= 0``.

    Row ``i`` of the product equals ``-f'(xi_i) / 3``.
    """
    J = knots.J
    tau = knots.augmented
    A = difference_matrix(J)
    D = np.diag(tau[4 : J + 3] - tau[1:J])
    # B1[i, j] = B_{j+1,3}(xi_i): drop the identically zero B_{1,3}
    B1 = basis_matrix(knots, knots.breakpoints, 3)[:, 1:J]
    return ConditionMatrices(A=A, D=D, B1=B1, necessary=B1 @ np.linalg.solve(D, A))


def necessary_holds(knots: KnotSet, gamma, tol: float | None = None) -> bool:
    gamma = np.asarray(gamma, dtype=float)
    vals = necessary_matrix(knots).necessary @ gamma
    if tol is None:
        tol = _tolerance(knots, gamma) / 3.0
    return bool(np.all(vals <= tol))


def _tolerance(knots: KnotSet, gamma: np.ndarray) -> float:
    # derivative scale of the coefficient differences
    tau = knots.augmented
    J = knots.J
    slopes = 3.0 * np.diff(gamma) / (tau[4 : J + 3] - tau[1:J])
    return 1e-10 * max(float(np.max(np.abs(slopes), initial=0.0)), float(np.finfo(float).tiny))


def stationary_points(knots: KnotSet, gamma) -> np.ndarray:
    """Zero-curvature candidates, one per knot interval.

    On ``[xi_i, xi_{i+1}]`` the second derivative is linear, so its root sits
    at ``pi * xi_i + (1 - pi) * xi_{i+1}`` with ``pi`` clamped to [0, 1]. When
    the curvature is constant on the interval both endpoints are returned.
    """
    a = curvature_coeffs(knots, gamma)  # A_3..A_J
    bp = knots.breakpoints
    out = []
    for i in range(knots.K + 1):
        a_left, a_right = a[i], a[i + 1]  # f'' / 6 at xi_i and xi_{i+1}
        if a_right == a_left:
            out.extend([bp[i], bp[i + 1]])
            continue
        pi = a_right / (a_right - a_left)
        pi_bar = pi if 0.0 <= pi <= 1.0 else (1.0 if pi > 1.0 else 0.0)
        out.append(pi_bar * bp[i] + (1.0 - pi_bar) * bp[i + 1])
    return np.asarray(out)


def exact_monotone(knots: KnotSet, gamma) -> MonotoneVerdict:
    gamma = np.asarray(gamma, dtype=float)
    pts = np.unique(np.concatenate([[knots.lower, knots.upper], stationary_points(knots, gamma)]))
    d = first_derivative(knots, gamma, pts)
    m = float(np.min(d))
    tol = _tolerance(knots, gamma)
    return MonotoneVerdict(is_monotone=bool(m >= -tol), evaluation_set=pts, min_derivative=m, tolerance=tol)


def condition_nesting_check(knots: KnotSet, gamma) -> tuple[bool, bool, bool]:
    """(sufficient, exact, necessary) verdicts for one coefficient vector."""
    return (
        sufficient_holds(gamma),
        exact_monotone(knots, gamma).is_monotone,
        necessary_holds(knots, gamma),
    )
