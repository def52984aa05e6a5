"""Monotone cubic B-spline fitting, selection, bootstrap bands and neural solution generators."""

from .basis import (
    DegenerateDomainError,
    DesignMatrix,
    DomainError,
    KnotSet,
    basis_matrix,
    design_matrix,
    first_derivative,
    make_knots,
    second_derivative,
    smoothing_knots,
    spline_value,
)
from .model import SplineModel
from .monotonicity import condition_nesting_check, exact_monotone, necessary_holds, sufficient_holds
from .penalty import PenaltyMatrix, factorize, penalty_matrix
from .selection import criterion, degrees_of_freedom, select_knot_count, select_lambda_gcv
from .solver import (
    RankDeficiencyError,
    SolverError,
    SplineFit,
    fit_monotone,
    fit_unconstrained,
    mse_crossover_probe,
    pava,
    socp_rewrite,
)
from .uncertainty import (
    ConfidenceBand,
    FitConfig,
    band_nonparametric,
    band_parametric,
    coverage_probability,
    jaccard_band,
    jaccard_interval,
)

__version__ = "0.1.0"
