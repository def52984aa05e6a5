"""Knot sequences and cubic B-spline basis evaluation.

Indices in docstrings are 1-based to match the usual B-spline notation;
arrays are 0-based. With ``K`` interior knots the clamped augmented
sequence has ``K + 8`` entries and there are ``J = K + 4`` cubic basis
functions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

ORDER = 4


class DomainError(ValueError):
    """Raised when an abscissa lies outside the boundary knots."""


class DegenerateDomainError(ValueError):
    """Raised when a sample does not span a non-empty interval."""


@dataclass(frozen=True)
class KnotSet:
    """Boundary and interior knots plus the clamped augmented sequence.

    Attributes:
        interior: Strictly increasing interior knots, length K.
        lower: Lower boundary knot.
        upper: Upper boundary knot.
        augmented: Clamped sequence of length K + 8.
    """

    interior: np.ndarray
    lower: float
    upper: float
    augmented: np.ndarray

    @classmethod
    def from_breakpoints(cls, lower: float, upper: float, interior=()) -> "KnotSet":
        interior = np.asarray(interior, dtype=float).ravel()
        full = np.concatenate([[lower], interior, [upper]])
        if not np.all(np.diff(full) > 0):
            raise ValueError("knots must be strictly increasing from lower to upper")
        aug = np.concatenate([np.full(ORDER, lower), interior, np.full(ORDER, upper)])
        return cls(interior=interior, lower=float(lower), upper=float(upper), augmented=aug)

    @property
    def K(self) -> int:
        return self.interior.size

    @property
    def J(self) -> int:
        return self.interior.size + ORDER

    @property
    def breakpoints(self) -> np.ndarray:
        """All K + 2 knots, boundaries included."""
        return self.augmented[ORDER - 1 : self.J + 1]

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def scaled_to_unit(self) -> "KnotSet":
        """The same knot layout affinely mapped onto [0, 1]."""
        return KnotSet.from_breakpoints(0.0, 1.0, (self.interior - self.lower) / self.width)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x >= self.lower) & (x <= self.upper)


def make_knots(x_sample, K: int) -> KnotSet:
    """Place ``K`` interior knots at the ``j/(K+1)`` empirical quantiles.

    Quantiles that coincide with each other or with a boundary are dropped,
    so the returned set may have fewer than ``K`` interior knots; a warning
    reports the effective count.
    """
    if K < 0:
        raise ValueError("K must be non-negative")
    x = np.asarray(x_sample, dtype=float).ravel()
    lo, hi = float(np.min(x)), float(np.max(x))
    if not hi > lo:
        raise DegenerateDomainError("need at least two distinct x values")
    probs = np.arange(1, K + 1) / (K + 1)
    q = np.quantile(x, probs) if K else np.empty(0)
    interior = np.unique(q)
    interior = interior[(interior > lo) & (interior < hi)]
    if interior.size < K:
        warnings.warn(
            f"{K - interior.size} knot quantile(s) collided; using K={interior.size} "
            f"interior knots instead of {K}",
            stacklevel=2,
        )
    return KnotSet.from_breakpoints(lo, hi, interior)


def smoothing_knot_count(n_unique: int) -> int:
    """Number of knots (boundaries included) used for smoothing splines.

    Follows the usual thinning rule: every unique x below 50 points, then a
    count growing on a log scale.
    """
    if n_unique < 50:
        return n_unique
    a1, a2, a3, a4 = np.log2([50, 100, 140, 200])
    if n_unique < 200:
        e = a1 + (a2 - a1) * (n_unique - 50) / 150
    elif n_unique < 800:
        e = a2 + (a3 - a2) * (n_unique - 200) / 600
    elif n_unique < 3200:
        e = a3 + (a4 - a3) * (n_unique - 800) / 2400
    else:
        return int(200 + (n_unique - 3200) ** 0.2)
    return int(2.0**e + 1e-9)  # guard exact powers against rounding down


def smoothing_knots(x_sample, nknots: int | None = None) -> KnotSet:
    """Knots at evenly spaced order statistics of the unique x values."""
    ux = np.unique(np.asarray(x_sample, dtype=float))
    if ux.size < 2:
        raise DegenerateDomainError("need at least two distinct x values")
    nk = smoothing_knot_count(ux.size) if nknots is None else int(nknots)
    nk = max(2, min(nk, ux.size))
    idx = np.unique(np.round(np.linspace(0, ux.size - 1, nk)).astype(int))
    picks = ux[idx]
    return KnotSet.from_breakpoints(picks[0], picks[-1], picks[1:-1])


def _interval_index(knots: KnotSet, x: np.ndarray) -> np.ndarray:
    # index i (0-based) with tau[i] <= x < tau[i+1]; last interval right-closed
    tau = knots.augmented
    i = np.searchsorted(tau, x, side="right") - 1
    return np.clip(i, ORDER - 1, knots.J - 1)


def basis_matrix(knots: KnotSet, x, order: int = ORDER) -> np.ndarray:
    """Evaluate all order-``order`` B-splines at each abscissa.

    Returns an ``(n, K + 8 - order)`` array built with the Cox-de Boor
    recursion; terms with a zero knot difference contribute nothing.
    """
    if order not in (1, 2, 3, 4):
        raise ValueError("order must be in 1..4")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size and not np.all(knots.contains(x)):
        bad = x[~knots.contains(x)]
        raise DomainError(
            f"{bad.size} abscissa(e) outside [{knots.lower}, {knots.upper}], e.g. {bad[0]!r}"
        )
    tau = knots.augmented
    m_tot = tau.size
    b = np.zeros((x.size, m_tot - 1))
    b[np.arange(x.size), _interval_index(knots, x)] = 1.0
    for m in range(2, order + 1):
        nb = m_tot - m
        left_den = tau[m - 1 : m - 1 + nb] - tau[:nb]
        right_den = tau[m : m + nb] - tau[1 : 1 + nb]
        with np.errstate(divide="ignore", invalid="ignore"):
            wl = np.where(left_den > 0, (x[:, None] - tau[:nb]) / left_den, 0.0)
            wr = np.where(right_den > 0, (tau[m : m + nb] - x[:, None]) / right_den, 0.0)
        b = wl * b[:, :nb] + wr * b[:, 1 : nb + 1]
    return b


def eval_basis(knots: KnotSet, x: float, order: int = ORDER) -> np.ndarray:
    """Values of the ``K + 8 - order`` order-``order`` B-splines at one point."""
    return basis_matrix(knots, [x], order)[0]


@dataclass(frozen=True)
class DesignMatrix:
    """``B[i, j] = B_j(x_i)`` for cubic B-splines, with per-row band offsets."""

    values: np.ndarray
    x: np.ndarray
    first_nonzero: np.ndarray

    @property
    def shape(self):
        return self.values.shape


def design_matrix(knots: KnotSet, x) -> DesignMatrix:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    values = basis_matrix(knots, x, ORDER)
    # nonzeros of row i live in columns first..first+3
    first = _interval_index(knots, x) - (ORDER - 1)
    return DesignMatrix(values=values, x=x, first_nonzero=first)


def spline_value(knots: KnotSet, gamma, x) -> np.ndarray:
    return basis_matrix(knots, x) @ np.asarray(gamma, dtype=float)


def derivative_weights(knots: KnotSet) -> np.ndarray:
    """Denominators ``tau_{j+3} - tau_j`` for j = 2..J of the first derivative."""
    tau = knots.augmented
    J = knots.J
    return tau[4 : J + 3] - tau[1:J]


def first_derivative(knots: KnotSet, gamma, x) -> np.ndarray | float:
    """Derivative of ``sum_j gamma_j B_j`` as a quadratic-spline expansion.

    ``f'(x) = 3 * sum_{j=2..J} (gamma_j - gamma_{j-1}) / (tau_{j+3} - tau_j) * B_{j,3}(x)``
    """
    gamma = np.asarray(gamma, dtype=float)
    scalar = np.ndim(x) == 0
    b3 = basis_matrix(knots, x, 3)
    # b3 column 0 is B_{1,3}, identically zero under clamping
    coef = 3.0 * np.diff(gamma) / derivative_weights(knots)
    out = b3[:, 1 : knots.J] @ coef
    return float(out[0]) if scalar else out


def curvature_matrix(knots: KnotSet) -> np.ndarray:
    """Linear map from ``gamma`` to ``(A_3, ..., A_J)``.

    ``f''(x) = 6 * sum_{j=3..J} A_j B_{j,2}(x)`` with
    ``A_j = [(g_j - g_{j-1})/(tau_{j+3}-tau_j) - (g_{j-1}-g_{j-2})/(tau_{j+2}-tau_{j-1})] / (tau_{j+2}-tau_j)``.
    """
    tau = knots.augmented
    J = knots.J
    C = np.zeros((J - 2, J))
    for r, j in enumerate(range(3, J + 1)):
        h2 = tau[j + 1] - tau[j - 1]  # tau_{j+2} - tau_j
        h3 = tau[j + 2] - tau[j - 1]  # tau_{j+3} - tau_j
        h3p = tau[j + 1] - tau[j - 2]  # tau_{j+2} - tau_{j-1}
        c = j - 1
        C[r, c] += 1.0 / (h3 * h2)
        C[r, c - 1] -= 1.0 / (h3 * h2) + 1.0 / (h3p * h2)
        C[r, c - 2] += 1.0 / (h3p * h2)
    return C


def curvature_coeffs(knots: KnotSet, gamma) -> np.ndarray:
    return curvature_matrix(knots) @ np.asarray(gamma, dtype=float)


def second_derivative_matrix(knots: KnotSet, x) -> np.ndarray:
    """``(n, J)`` matrix whose rows map ``gamma`` to ``f''(x_i)``."""
    b2 = basis_matrix(knots, x, 2)
    return 6.0 * b2[:, 2 : knots.J] @ curvature_matrix(knots)


def second_derivative(knots: KnotSet, gamma, x) -> np.ndarray:
    return second_derivative_matrix(knots, x) @ np.asarray(gamma, dtype=float)
