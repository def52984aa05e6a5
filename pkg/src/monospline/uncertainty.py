"""Bootstrap percentile confidence bands, coverage, and band overlap."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .basis import DegenerateDomainError, KnotSet, make_knots, smoothing_knots, spline_value
from .model import SplineModel
from .solver import SCHEMA_VERSION, RankDeficiencyError, SolverError

log = logging.getLogger(__name__)

MAX_RETRIES = 3


@dataclass(frozen=True)
class FitConfig:
    """How a single curve is fitted.

    ``K`` set means quantile knots (cubic spline); ``K=None`` means smoothing
    knots with an optional explicit ``nknots``.
    """

    lam: float = 0.0
    K: int | None = None
    nknots: int | None = None
    direction: int = 1
    monotone: bool = True

    def knots_for(self, x) -> KnotSet:
        if self.K is not None:
            return make_knots(x, self.K)
        return smoothing_knots(x, self.nknots)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ConfidenceBand:
    x: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    B: int
    kind: str
    source: str = "opt"
    failures: int = 0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if not (self.x.shape == self.lower.shape == self.upper.shape):
            raise ValueError("x, lower and upper must have the same length")
        if np.any(self.lower > self.upper):
            raise ValueError("lower exceeds upper")

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "source": self.source,
            "level": self.level,
            "B": self.B,
            "failures": self.failures,
            "x": self.x.tolist(),
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ConfidenceBand":
        d = json.loads(text)
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {d.get('schema_version')!r}")
        return cls(d["x"], d["lower"], d["upper"], d["level"], d["B"], d["kind"], d["source"], d["failures"])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "lower", "upper"])
        for row in zip(self.x, self.lower, self.upper):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, level: float = float("nan"), B: int = 0, kind: str = "unknown") -> "ConfidenceBand":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows or set(rows[0]) != {"x", "lower", "upper"}:
            raise ValueError("band CSV needs columns x, lower, upper")
        cols = {k: [float(r[k]) for r in rows] for k in ("x", "lower", "upper")}
        return cls(cols["x"], cols["lower"], cols["upper"], level, B, kind, "file")


def quantile_index(q: float, B: int) -> int:
    """Zero-based order-statistic index ``ceil(q * B) - 1``, clamped to ``[0, B-1]``."""
    k = math.ceil(q * B - 1e-12)
    return min(max(k, 1), B) - 1


def percentile_band(curves, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise ``alpha/2`` and ``1 - alpha/2`` empirical quantiles of ``curves`` (B x n)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    curves = np.asarray(curves, dtype=float)
    if curves.ndim != 2 or curves.shape[0] < 1:
        raise ValueError("curves must be a non-empty (B, n) array")
    B = curves.shape[0]
    s = np.sort(curves, axis=0)
    return s[quantile_index(alpha / 2, B)].copy(), s[quantile_index(1 - alpha / 2, B)].copy()


def replicate_streams(seed: int, B: int) -> list[np.random.Generator]:
    """One independent generator per replicate, so results do not depend on scheduling."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(B)]


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


_FIT_ERRORS = (RankDeficiencyError, SolverError, DegenerateDomainError, np.linalg.LinAlgError)


def _bootstrap(x, draw, knots: KnotSet, config: FitConfig, B: int, seed: int, workers: int):
    """Refit ``B`` bootstrap samples and evaluate each fit at ``x``.

    ``draw(rng)`` returns ``(x_star, y_star)``. Failed refits are redrawn from
    the same replicate stream up to ``MAX_RETRIES`` times.
    """
    streams = replicate_streams(seed, B)

    def one(b):
        rng = streams[b]
        for _ in range(MAX_RETRIES + 1):
            xs, ys = draw(rng)
            try:
                m = SplineModel.build(xs, knots)
                fit = m.fit(ys, config.lam, monotone=config.monotone, direction=config.direction)
            except _FIT_ERRORS as exc:
                log.info("bootstrap replicate %d failed: %s", b, exc)
                continue
            return spline_value(knots, fit.gamma, x)
        return None

    out = _map(one, range(B), workers)
    curves = [c for c in out if c is not None]
    failures = B - len(curves)
    if not curves:
        raise SolverError(f"all {B} bootstrap refits failed")
    return np.vstack(curves), failures


def band_nonparametric(x, y, fit_config: FitConfig, B: int, alpha: float, seed: int,
                       workers: int = 1, return_curves: bool = False):
    """Percentile band from refits on case resamples of ``(x, y)``.

    Knots are placed once on the full sample and kept for every replicate.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if B < 2:
        raise ValueError("B must be at least 2")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    knots = fit_config.knots_for(x)
    n = x.size

    def draw(rng):
        idx = rng.integers(0, n, size=n)
        return x[idx], y[idx]

    curves, failures = _bootstrap(x, draw, knots, fit_config, B, seed, workers)
    lo, hi = percentile_band(curves, alpha)
    band = ConfidenceBand(x, lo, hi, 1 - alpha, B, "nonparametric", "opt", failures)
    return (band, curves) if return_curves else band


def band_parametric(x, y, fit_config: FitConfig, B: int, alpha: float, seed: int,
                    workers: int = 1, return_curves: bool = False):
    """Percentile band from refits on ``y_hat + e``, ``e ~ N(0, sigma_hat^2 I)``.

    ``sigma_hat`` is the sample standard deviation (ddof=1) of the residuals of
    one initial fit at the configured ``lam``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if B < 2:
        raise ValueError("B must be at least 2")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    knots = fit_config.knots_for(x)
    model = SplineModel.build(x, knots)
    fit = model.fit(y, fit_config.lam, monotone=fit_config.monotone, direction=fit_config.direction)
    y_hat = fit.fitted
    sigma = float(np.std(y - y_hat, ddof=1))

    def draw(rng):
        return x, y_hat + sigma * rng.standard_normal(x.size)

    curves, failures = _bootstrap(x, draw, knots, fit_config, B, seed, workers)
    lo, hi = percentile_band(curves, alpha)
    band = ConfidenceBand(x, lo, hi, 1 - alpha, B, "parametric", "opt", failures)
    return (band, curves) if return_curves else band


def jaccard_interval(a, b) -> float:
    """Width of the intersection over width of the union of two closed intervals.

    Two identical zero-width intervals score 1.
    """
    a0, a1 = map(float, a)
    b0, b1 = map(float, b)
    if a1 < a0 or b1 < b0:
        raise ValueError("interval lower bound exceeds upper bound")
    inter = max(0.0, min(a1, b1) - max(a0, b0))
    union = (a1 - a0) + (b1 - b0) - inter
    if union == 0.0:
        return 1.0 if (a0, a1) == (b0, b1) else 0.0
    return inter / union


def _jaccard_vec(lo1, hi1, lo2, hi2) -> np.ndarray:
    inter = np.maximum(0.0, np.minimum(hi1, hi2) - np.maximum(lo1, lo2))
    union = (hi1 - lo1) + (hi2 - lo2) - inter
    same = (lo1 == lo2) & (hi1 == hi2)
    with np.errstate(invalid="ignore", divide="ignore"):
        j = inter / union
    return np.where(union == 0.0, np.where(same, 1.0, 0.0), j)


def jaccard_band(cb1: ConfidenceBand, cb2: ConfidenceBand) -> float:
    """Mean pointwise interval Jaccard index of two bands on the same grid."""
    if cb1.x.shape != cb2.x.shape or not np.array_equal(cb1.x, cb2.x):
        raise ValueError("bands are defined on different x grids")
    return float(np.mean(_jaccard_vec(cb1.lower, cb1.upper, cb2.lower, cb2.upper)))


def coverage_probability(cb: ConfidenceBand, truth) -> float:
    truth = np.asarray(truth, dtype=float)
    if truth.shape != cb.x.shape:
        raise ValueError("truth length differs from the band grid")
    return float(np.mean((cb.lower <= truth) & (truth <= cb.upper)))
