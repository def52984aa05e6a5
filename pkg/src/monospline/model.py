"""Bundles a knot set with its design and penalty matrices for repeated fits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import DesignMatrix, KnotSet, design_matrix, make_knots, smoothing_knots, spline_value
from .penalty import PenaltyMatrix, factorize, penalty_matrix
from .solver import SplineFit, fit_monotone, fit_unconstrained


@dataclass
class SplineModel:
    """Cubic B-spline setup on fixed abscissae.

    The penalty is computed on the knot layout rescaled to [0, 1] when
    ``unit_penalty`` is true, which keeps ``lam`` comparable across data sets
    with different x ranges. Cubic splines (``lam = 0``) are unaffected.
    """

    knots: KnotSet
    x: np.ndarray
    design: DesignMatrix
    penalty: PenaltyMatrix
    unit_penalty: bool = True

    @classmethod
    def build(cls, x, knots: KnotSet, unit_penalty: bool = True) -> "SplineModel":
        x = np.asarray(x, dtype=float)
        P = penalty_matrix(knots.scaled_to_unit() if unit_penalty else knots)
        return cls(knots=knots, x=x, design=design_matrix(knots, x), penalty=P, unit_penalty=unit_penalty)

    @classmethod
    def cubic(cls, x, K: int, unit_penalty: bool = True) -> "SplineModel":
        """Quantile knots, as used for (monotone) cubic splines."""
        return cls.build(x, make_knots(x, K), unit_penalty)

    @classmethod
    def smoothing(cls, x, nknots: int | None = None, unit_penalty: bool = True) -> "SplineModel":
        """Knots at thinned unique x values, as used for smoothing splines."""
        return cls.build(x, smoothing_knots(x, nknots), unit_penalty)

    @property
    def J(self) -> int:
        return self.knots.J

    @property
    def B(self) -> np.ndarray:
        return self.design.values

    @property
    def L(self) -> np.ndarray:
        if self.penalty.factor is None:
            factorize(self.penalty)
        return self.penalty.factor

    def fit(self, y, lam: float = 0.0, monotone: bool = True, direction: int = 1) -> SplineFit:
        if monotone:
            return fit_monotone(self.design, self.penalty, y, lam, direction)
        return fit_unconstrained(self.design, self.penalty, y, lam)

    def predict(self, gamma, x=None) -> np.ndarray:
        if x is None:
            return self.B @ np.asarray(gamma, dtype=float)
        return spline_value(self.knots, gamma, x)

    def objective(self, y, gamma, lam: float) -> float:
        gamma = np.asarray(gamma, dtype=float)
        r = np.asarray(y, dtype=float) - self.B @ gamma
        return float(r @ r + lam * gamma @ self.penalty.omega @ gamma)
