"""Simulation study: test curves, noisy data, L_p errors and method comparison tables."""

from __future__ import annotations

import csv
import io
import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf, expit

from .basis import DegenerateDomainError
from .model import SplineModel
from .selection import select_knot_count, select_lambda_gcv
from .solver import RankDeficiencyError, SolverError, pava

log = logging.getLogger(__name__)

METHODS = ("CS", "MCS", "SS", "MSS", "Isotonic")
METHOD_ALIASES = {"cs": "CS", "mcs": "MCS", "ss": "SS", "mss": "MSS", "iso": "Isotonic", "isotonic": "Isotonic"}
METRICS = ("L1", "L2", "Linf")


def _step(x, t):
    return np.sum(np.asarray(x)[..., None] > t, axis=-1).astype(float)


def _erf_curve(x):
    x = np.asarray(x, dtype=float)
    return 5.0 + sum(erf(15.0 * i * (x - i / 5.0)) for i in range(1, 5))


@dataclass(frozen=True)
class CurveSpec:
    """A monotone test curve on ``domain``.

    ``steps`` is the number of random jump points of the step curve.
    """

    name: str
    domain: tuple[float, float]
    steps: int = 5

    def truth(self, x, jumps=None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n = self.name
        if n == "logistic":
            return expit(x)
        if n == "growth":
            return 1.0 / (1.0 - 0.42 * np.log(x))
        if n in ("cubic", "x3"):
            return x**3
        if n == "step":
            if jumps is None:
                raise ValueError("step curve needs its jump points")
            return _step(x, np.asarray(jumps))
        if n == "erf":
            return _erf_curve(x)
        if n == "s5x":
            return expit(5.0 * x)
        if n == "exp":
            return np.exp(x)
        if n == "sinhalf":
            return np.sin(0.5 * np.pi * x)
        raise ValueError(f"unknown curve {n!r}")


CURVES = {
    "logistic": CurveSpec("logistic", (-5.0, 5.0)),
    "growth": CurveSpec("growth", (0.01, 10.0)),
    "cubic": CurveSpec("cubic", (-1.0, 1.0)),
    "x3": CurveSpec("x3", (-1.0, 1.0)),
    "step": CurveSpec("step", (-1.0, 1.0)),
    "erf": CurveSpec("erf", (0.0, 1.0)),
    "s5x": CurveSpec("s5x", (-1.0, 1.0)),
    "exp": CurveSpec("exp", (-1.0, 1.0)),
    "sinhalf": CurveSpec("sinhalf", (-1.0, 1.0)),
}


def get_curve(name: str) -> CurveSpec:
    try:
        return CURVES[name]
    except KeyError:
        raise ValueError(f"unknown curve {name!r}; valid: {', '.join(sorted(CURVES))}") from None


def generate(curve: CurveSpec | str, n: int, sigma: float, seed) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Uniform ``x`` on the curve domain, ``y = f(x) + N(0, sigma^2)``."""
    if isinstance(curve, str):
        curve = get_curve(curve)
    if n < 2:
        raise ValueError("n must be at least 2")
    rng = np.random.default_rng(seed)
    jumps = rng.uniform(*curve.domain, size=curve.steps) if curve.name == "step" else None
    x = rng.uniform(*curve.domain, size=n)
    f = curve.truth(x, jumps)
    y = f + sigma * rng.standard_normal(n) if sigma > 0 else f.copy()
    return x, y, f


def lp_distance(fitted, truth, p) -> float:
    fitted = np.asarray(fitted, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if fitted.shape != truth.shape:
        raise ValueError("fitted and truth differ in length")
    d = np.abs(fitted - truth)
    if p in (np.inf, "inf"):
        return float(np.max(d))
    if p not in (1, 2):
        raise ValueError("p must be 1, 2 or inf")
    return float(np.sum(d**p) ** (1.0 / p))


def scaled_errors(fitted, truth) -> dict:
    """``(1/n) L1``, ``(1/sqrt(n)) L2`` and ``L_inf``."""
    n = np.asarray(truth).size
    return {
        "L1": lp_distance(fitted, truth, 1) / n,
        "L2": lp_distance(fitted, truth, 2) / np.sqrt(n),
        "Linf": lp_distance(fitted, truth, np.inf),
    }


def isotonic_fit(x, y) -> np.ndarray:
    """PAVA on ``y`` ordered by ``x``, returned in the input order."""
    order = np.argsort(x, kind="stable")
    out = np.empty(len(y))
    out[order] = pava(np.asarray(y, dtype=float)[order])
    return out


def fit_methods(x, y, methods, K_grid=None, lambda_grid=None, seed: int = 0) -> dict:
    """Fitted values at ``x`` for each requested method.

    CS and MCS share the cross-validated knot count; SS and MSS share the GCV
    choice of ``lam`` for the unconstrained smoothing spline.
    """
    out = {}
    if {"CS", "MCS"} & set(methods):
        kw = {} if K_grid is None else {"K_grid": K_grid}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            K = int(select_knot_count(x, y, folds=2, seed=seed, **kw).chosen)
            m = SplineModel.cubic(x, K)
        if "CS" in methods:
            out["CS"] = m.fit(y, 0.0, monotone=False).fitted
        if "MCS" in methods:
            out["MCS"] = m.fit(y, 0.0, monotone=True).fitted
    if {"SS", "MSS"} & set(methods):
        m = SplineModel.smoothing(x)
        lam = select_lambda_gcv(x, y, lambda_grid, model=m, monotone=False).chosen
        if "SS" in methods:
            out["SS"] = m.fit(y, lam, monotone=False).fitted
        if "MSS" in methods:
            out["MSS"] = m.fit(y, lam, monotone=True).fitted
    if "Isotonic" in methods:
        out["Isotonic"] = isotonic_fit(x, y)
    return out


@dataclass
class BenchReport:
    """Per (sigma, method, metric) mean and standard error over repetitions."""

    curve: str
    sigmas: list[float]
    methods: list[str]
    reps: int
    n: int
    seed: int
    mean: dict = field(default_factory=dict)  # (sigma, method, metric) -> value
    se: dict = field(default_factory=dict)
    rank: dict = field(default_factory=dict)
    highlight: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)  # (sigma, method) -> count
    errors: dict = field(default_factory=dict, repr=False)  # (sigma, method) -> (reps, 3) array

    def rows(self):
        for s in self.sigmas:
            for m in self.methods:
                yield s, m

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["schema_version", "curve", "sigma", "method", "metric", "mean", "se", "rank", "highlight", "failures", "reps"])
        for s, m in self.rows():
            for k in METRICS:
                w.writerow([1, self.curve, repr(s), m, k, repr(self.mean[s, m, k]), repr(self.se[s, m, k]),
                            self.rank[s, m, k], int(self.highlight[s, m, k]), self.failures[s, m], self.reps])
        return buf.getvalue()

    def to_table(self) -> str:
        """Fixed-width table: ``mean (se)`` with the rank appended as ``^r``; ``*`` marks highlights."""
        head = f"{'sigma':>6} {'method':<10}" + "".join(f"{h:>26}" for h in ("(1/n)L1", "(1/sqrt n)L2", "Linf"))
        lines = [f"curve: {self.curve}  n={self.n}  reps={self.reps}  seed={self.seed}", head]
        for s, m in self.rows():
            cells = []
            for k in METRICS:
                mark = "*" if self.highlight[s, m, k] else " "
                cells.append(f"{mark}{self.mean[s, m, k]:.2e} ({self.se[s, m, k]:.1e})^{self.rank[s, m, k]}")
            lines.append(f"{s:>6g} {m:<10}" + "".join(f"{c:>26}" for c in cells))
        return "\n".join(lines) + "\n"


def _summarize(report: BenchReport):
    for s in report.sigmas:
        for ki, k in enumerate(METRICS):
            means, ses = [], []
            for m in report.methods:
                e = report.errors[s, m][:, ki]
                e = e[np.isfinite(e)]
                mu = float(np.mean(e)) if e.size else np.inf
                se = float(np.std(e, ddof=1) / np.sqrt(e.size)) if e.size > 1 else 0.0
                report.mean[s, m, k], report.se[s, m, k] = mu, se
                means.append(mu)
                ses.append(se)
            means = np.asarray(means)
            order = np.argsort(means, kind="stable")
            ranks = np.empty(len(means), dtype=int)
            ranks[order] = np.arange(1, len(means) + 1)
            best = order[0]
            limit = means[best] + ses[best]
            for i, m in enumerate(report.methods):
                report.rank[s, m, k] = int(ranks[i])
                report.highlight[s, m, k] = bool(i == best or means[i] <= limit)


_REP_ERRORS = (RankDeficiencyError, SolverError, DegenerateDomainError, np.linalg.LinAlgError, ValueError)


def _one_rep(curve, n, sigma, methods, seq, K_grid, lambda_grid):
    data_seed, cv_seed = seq.spawn(2)
    x, y, f = generate(curve, n, sigma, data_seed)
    try:
        fits = fit_methods(x, y, methods, K_grid, lambda_grid, int(cv_seed.generate_state(1)[0]))
    except _REP_ERRORS as exc:
        log.info("repetition failed: %s", exc)
        return {m: None for m in methods}
    return {m: (scaled_errors(fits[m], f) if m in fits else None) for m in methods}


def run_study(curve: CurveSpec | str, sigmas, methods=METHODS, reps: int = 100, n: int = 100, seed: int = 0,
              K_grid=None, lambda_grid=None, workers: int = 1) -> BenchReport:
    """Repeat data generation and fitting ``reps`` times per noise level.

    Each repetition draws from its own seed sequence child, so results do not
    depend on ``workers``.
    """
    if isinstance(curve, str):
        curve = get_curve(curve)
    methods = [METHOD_ALIASES.get(m.lower(), m) if isinstance(m, str) else m for m in methods]
    if not methods:
        raise ValueError("methods is empty")
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ValueError(f"unknown method(s) {bad}; valid: {', '.join(METHODS)}")
    sigmas = [float(s) for s in sigmas]
    report = BenchReport(curve.name, sigmas, list(methods), reps, n, seed)
    for si, s in enumerate(sigmas):
        seqs = np.random.SeedSequence([seed, si]).spawn(reps)
        args = [(curve, n, s, methods, q, K_grid, lambda_grid) for q in seqs]
        if workers > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=workers) as pool:
                res = list(pool.map(lambda a: _one_rep(*a), args))
        else:
            res = [_one_rep(*a) for a in args]
        for m in methods:
            arr = np.array([[r[m][k] for k in METRICS] if r[m] is not None else [np.nan] * 3 for r in res])
            report.errors[s, m] = arr
            report.failures[s, m] = int(np.sum(~np.isfinite(arr[:, 0])))
    _summarize(report)
    return report


def bench_runtime(n_grid=(50, 100, 200, 500), lambda_count: int = 10, seed: int = 0,
                  train_iters: int = 2000, eval_count: int = 2000) -> list[dict]:
    """Wall-clock of optimizer fits over a lambda grid, generator training and generator evaluation.

    Uses the cubic curve with ``sigma = 0.2``. Training is capped at
    ``train_iters`` steps so timings compare per-step costs across ``n``.
    """
    from .generator import GeneratorConfig, even_lambda_grid, forward_batch, train_point_generator
    from .selection import DEFAULT_LAMBDA_RANGE

    rows = []
    for n in n_grid:
        x, y, _ = generate("cubic", n, 0.2, [seed, n])
        m = SplineModel.smoothing(x)
        lams = even_lambda_grid(DEFAULT_LAMBDA_RANGE, lambda_count, "log")
        t0 = time.perf_counter()
        for lam in lams:
            m.fit(y, lam)
        t_opt = time.perf_counter() - t0
        cfg = GeneratorConfig(max_iter=train_iters, patience=train_iters + 1)
        t0 = time.perf_counter()
        net = train_point_generator(x, y, m.knots, m.penalty, DEFAULT_LAMBDA_RANGE, cfg, seed=seed)
        t_train = time.perf_counter() - t0
        ev = np.resize(lams, eval_count)
        t0 = time.perf_counter()
        forward_batch(net, np.broadcast_to(y, (eval_count, n)), ev)
        t_eval = time.perf_counter() - t0
        opt_full = t_opt * eval_count / lambda_count
        rows.append({
            "n": n,
            "opt_seconds": t_opt,
            "opt_seconds_scaled": opt_full,
            "train_seconds": t_train,
            "eval_seconds": t_eval,
            "opt_over_eval": opt_full / t_eval if t_eval > 0 else np.inf,
        })
    return rows
