"""Degrees of freedom, information criteria, and tuning-parameter selection."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .basis import DegenerateDomainError, make_knots
from .model import SplineModel
from .solver import RankDeficiencyError, SolverError, SplineFit

log = logging.getLogger(__name__)

DEFAULT_LAMBDA_RANGE = (np.exp(-8.0), np.exp(-2.0))
DEFAULT_K_GRID = (2, 4, 6, 8, 10, 15, 20)


class UndefinedCriterionError(ValueError):
    pass


@dataclass
class SelectionReport:
    criterion: str
    grid: np.ndarray
    scores: np.ndarray
    chosen: float
    df_at_chosen: float
    failures: dict = field(default_factory=dict)
    dropped: int = 0

    @property
    def chosen_index(self) -> int:
        return int(np.flatnonzero(self.grid == self.chosen)[0])


def degrees_of_freedom(fit: SplineFit) -> int:
    """Number of distinct coefficient values (tie blocks) of a fit."""
    return len(fit.tie_pattern)


def criterion(fit: SplineFit, y, which: str, df: float | None = None) -> float:
    """AIC, BIC or GCV of a fit; ``df`` defaults to the tie-block count."""
    y = np.asarray(y, dtype=float)
    n = y.size
    rss = float(np.sum((y - fit.fitted) ** 2))
    df = degrees_of_freedom(fit) if df is None else df
    which = which.upper()
    if which == "AIC":
        return n * np.log(rss) + 2.0 * df
    if which == "BIC":
        return n * np.log(rss) + df * np.log(n)
    if which == "GCV":
        if df >= n:
            raise UndefinedCriterionError(f"GCV undefined for df={df} >= n={n}")
        return rss / (1.0 - df / n) ** 2
    raise ValueError(f"unknown criterion {which!r}")


def _argmin_prefer(scores: np.ndarray, order: np.ndarray, y: np.ndarray) -> int:
    """Index of the minimal score; near-ties go to the first entry of ``order``."""
    finite = np.isfinite(scores)
    if not finite.any():
        raise ValueError("no grid point produced a finite score")
    best = float(np.min(scores[finite]))
    tol = 1e-9 * abs(best) + 1e-15 * float(np.mean(y**2))
    for i in order:
        if finite[i] and scores[i] <= best + tol:
            return int(i)
    raise AssertionError("unreachable")


def cv_folds(n: int, folds: int, seed: int) -> list[np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    return np.array_split(perm, folds)


def select_knot_count(x, y, K_grid=DEFAULT_K_GRID, folds: int = 2, seed: int = 0,
                      monotone: bool = False) -> SelectionReport:
    """Choose the interior knot count by ``folds``-fold cross-validation.

    Each training fold gets its own quantile knots; held-out points outside
    the training knot range are dropped from the score.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    grid = np.asarray(sorted(set(int(k) for k in K_grid)))
    if grid.size == 0:
        raise ValueError("K_grid is empty")
    if x.size < 2 * folds:
        raise ValueError("need at least two points per fold")
    parts = cv_folds(x.size, folds, seed)
    scores = np.full(grid.size, np.inf)
    failures, dropped = {}, 0
    for gi, K in enumerate(grid):
        sse, cnt = 0.0, 0
        try:
            for f in range(folds):
                test = parts[f]
                train = np.concatenate([parts[g] for g in range(folds) if g != f])
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    knots = make_knots(x[train], K)
                keep = knots.contains(x[test])
                if gi == 0:
                    dropped += int(np.sum(~keep))
                m = SplineModel.build(x[train], knots)
                fit = m.fit(y[train], 0.0, monotone=monotone)
                pred = m.predict(fit.gamma, x[test][keep])
                sse += float(np.sum((y[test][keep] - pred) ** 2))
                cnt += int(keep.sum())
            scores[gi] = sse / max(cnt, 1)
        except (RankDeficiencyError, SolverError, DegenerateDomainError) as exc:
            failures[int(K)] = str(exc)
    if dropped:
        warnings.warn(f"{dropped} held-out point(s) fell outside training knots and were dropped",
                      stacklevel=2)
    i = _argmin_prefer(scores, np.arange(grid.size), y)
    return SelectionReport("CV", grid, scores, int(grid[i]), float(grid[i] + 4), failures, dropped)


def select_lambda_gcv(x, y, lambda_grid=None, model: SplineModel | None = None,
                      monotone: bool = True, direction: int = 1) -> SelectionReport:
    """Choose ``lam`` by GCV over a log-spaced grid.

    The df is the trace of the smoother: for monotone fits it is taken with
    the fitted tie pattern held fixed, which equals the tie-block count when
    ``lam = 0``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if lambda_grid is None:
        lambda_grid = np.exp(np.linspace(np.log(DEFAULT_LAMBDA_RANGE[0]), np.log(DEFAULT_LAMBDA_RANGE[1]), 25))
    grid = np.asarray(lambda_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("lambda grid is empty")
    model = SplineModel.smoothing(x) if model is None else model
    scores = np.full(grid.size, np.inf)
    dfs = np.full(grid.size, np.nan)
    failures = {}
    for i, lam in enumerate(grid):
        try:
            fit = model.fit(y, lam, monotone=monotone, direction=direction)
            dfs[i] = fit.edf
            scores[i] = criterion(fit, y, "GCV", df=dfs[i])
        except (RankDeficiencyError, SolverError, UndefinedCriterionError) as exc:
            failures[float(lam)] = str(exc)
            log.info("lambda=%g excluded: %s", lam, exc)
    order = np.argsort(-grid, kind="stable")  # larger lambda wins ties
    i = _argmin_prefer(scores, order, y)
    return SelectionReport("GCV", grid, scores, float(grid[i]), float(dfs[i]), failures)
