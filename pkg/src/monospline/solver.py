"""Penalized and monotone B-spline least squares.

The monotone problem

    minimize ||y - B g||^2 + lam * g' Omega g   subject to  g_1 <= ... <= g_J

is solved with a primal active-set method whose working set is a tie
pattern: a partition of the coefficients into runs forced to be equal.
For a fixed pattern the minimizer has the closed form
``g = G' (G Q G')^{-1} G B'y`` with ``Q = B'B + lam * Omega`` and ``G`` the
block-aggregation matrix, so each iteration is one small SPD solve.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .basis import DesignMatrix
from .monotonicity import difference_matrix
from .penalty import PenaltyMatrix, factorize

SCHEMA_VERSION = 1


class RankDeficiencyError(np.linalg.LinAlgError):
    """``B'B + lam * Omega`` is singular; ``directions`` holds null vectors."""

    def __init__(self, message, directions=None):
        super().__init__(message)
        self.directions = directions


class SolverError(RuntimeError):
    """The active-set iteration hit its cap; carries the best feasible iterate."""

    def __init__(self, message, gamma=None, residual=None):
        super().__init__(message)
        self.gamma = gamma
        self.residual = residual


@dataclass
class SplineFit:
    gamma: np.ndarray
    lam: float
    direction: int
    tie_pattern: list[tuple[int, int]]
    df: int
    fitted: np.ndarray
    residual_sd: float
    kkt_residual: float
    multipliers: np.ndarray | None = field(default=None, repr=False)
    edf: float | None = None
    iterations: int = 0
    rss: float = float("nan")


def _values(Bm) -> np.ndarray:
    return Bm.values if isinstance(Bm, DesignMatrix) else np.asarray(Bm, dtype=float)


def _omega(P) -> np.ndarray:
    return P.omega if isinstance(P, PenaltyMatrix) else np.asarray(P, dtype=float)


def tie_pattern(gamma, rtol: float = 1e-9) -> list[tuple[int, int]]:
    """Maximal runs of equal coefficients as half-open ``(start, stop)`` pairs."""
    gamma = np.asarray(gamma, dtype=float)
    span = float(np.ptp(gamma)) if gamma.size else 0.0
    tol = rtol * span
    starts = [0] + [j + 1 for j in range(gamma.size - 1) if abs(gamma[j + 1] - gamma[j]) > tol]
    stops = starts[1:] + [gamma.size]
    return list(zip(starts, stops))


def tie_matrix(pattern, J: int) -> np.ndarray:
    """``(g, J)`` 0/1 matrix summing the coefficients of each block."""
    G = np.zeros((len(pattern), J))
    for r, (a, b) in enumerate(pattern):
        G[r, a:b] = 1.0
    if not np.array_equal(G.sum(axis=0), np.ones(J)):
        raise ValueError("tie pattern must partition 0..J-1")
    return G


def _null_directions(Q: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(Q)
    tol = Q.shape[0] * np.finfo(float).eps * max(float(np.max(np.abs(w))), 1.0)
    return V[:, w <= tol]


def _cho(Q: np.ndarray):
    try:
        return linalg.cho_factor(Q, lower=True)
    except linalg.LinAlgError:
        null = _null_directions(Q)
        cols = sorted({int(np.argmax(np.abs(v))) for v in null.T}) if null.size else []
        raise RankDeficiencyError(
            f"B'B + lam*Omega is singular (nullity {null.shape[1]}); "
            f"deficient directions load mostly on coefficient(s) {cols}",
            directions=null,
        ) from None


def _normal_equations(Bm, P, y, lam):
    B = _values(Bm)
    y = np.asarray(y, dtype=float)
    if lam < 0:
        raise ValueError("lam must be non-negative")
    if B.shape[0] != y.size:
        raise ValueError("design rows and y length differ")
    Q = B.T @ B
    if lam > 0:
        Q = Q + lam * _omega(P)
    return B, y, Q, B.T @ y


def _finish(B, y, gamma, lam, direction, pattern, kkt, mult=None, edf=None, iters=0) -> SplineFit:
    fitted = B @ gamma
    res = y - fitted
    sd = float(np.std(res, ddof=1)) if y.size > 1 else 0.0
    fit = SplineFit(
        gamma=gamma,
        lam=float(lam),
        direction=direction,
        tie_pattern=pattern,
        df=len(pattern),
        fitted=fitted,
        residual_sd=sd,
        kkt_residual=kkt,
        multipliers=mult,
        edf=edf,
        iterations=iters,
        rss=float(res @ res),
    )
    return fit


def fit_unconstrained(Bm, P, y, lam: float = 0.0) -> SplineFit:
    """Penalized least squares ``(B'B + lam*Omega)^{-1} B'y``."""
    B, y, Q, c = _normal_equations(Bm, P, y, lam)
    cf = _cho(Q)
    gamma = linalg.cho_solve(cf, c)
    resid = Q @ gamma - c
    kkt = float(np.max(np.abs(resid)) / max(float(np.max(np.abs(c))), np.finfo(float).tiny))
    edf = float(np.trace(linalg.cho_solve(cf, B.T @ B)))
    J = gamma.size
    return _finish(B, y, gamma, lam, 0, [(j, j + 1) for j in range(J)], kkt, edf=edf)


def _solve_blocks(Q, c, starts):
    GQ = np.add.reduceat(Q, starts, axis=0)
    GQG = np.add.reduceat(GQ, starts, axis=1)
    Gc = np.add.reduceat(c, starts)
    beta = linalg.cho_solve(linalg.cho_factor(GQG, lower=True), Gc)
    sizes = np.diff(np.append(starts, c.size))
    return np.repeat(beta, sizes)


def solve_tied(Bm, P, y, lam, pattern) -> np.ndarray:
    """Minimizer of the penalized objective with the given blocks tied."""
    _, _, Q, c = _normal_equations(Bm, P, y, lam)
    starts = np.array([a for a, _ in pattern])
    return _solve_blocks(Q, c, starts)


def _suffix_sums(r):
    return np.cumsum(r[::-1])[::-1]


def _active_set(Q, c, max_iter):
    J = c.size
    scale = max(float(np.max(np.abs(c))), np.finfo(float).tiny)
    tied = np.ones(J - 1, dtype=bool)  # tied[j]: g_j == g_{j+1}
    gamma = _solve_blocks(Q, c, np.array([0]))
    gscale = max(float(np.max(np.abs(gamma))), np.finfo(float).tiny)
    feas_tol = 1e-12 * gscale
    dual_tol = 1e-12 * scale
    for it in range(1, max_iter + 1):
        starts = np.concatenate([[0], np.flatnonzero(~tied) + 1])
        cand = _solve_blocks(Q, c, starts)
        dcand = np.diff(cand)
        blocking = (~tied) & (dcand < -feas_tol)
        if not blocking.any():
            gamma = cand
            mu = _suffix_sums(Q @ gamma - c)[1:]
            neg = np.flatnonzero(tied & (mu < -dual_tol))
            if neg.size == 0:
                return gamma, mu, it
            tied[neg[0]] = False  # smallest index first
            continue
        dcur = np.diff(gamma)
        idx = np.flatnonzero(blocking)
        ratios = dcur[idx] / (dcur[idx] - dcand[idx])
        alpha = float(np.min(ratios))
        gamma = gamma + alpha * (cand - gamma)
        hit = idx[ratios <= alpha + 1e-14]
        tied[hit] = True
        # snap the new ties exactly
        starts = np.concatenate([[0], np.flatnonzero(~tied) + 1])
        sizes = np.diff(np.append(starts, J))
        means = np.add.reduceat(gamma, starts) / sizes
        gamma = np.repeat(means, sizes)
    raise SolverError(
        f"active set did not converge in {max_iter} iterations",
        gamma=gamma,
        residual=float(np.max(np.abs(_suffix_sums(Q @ gamma - c)))) / scale,
    )


def fit_monotone(Bm, P, y, lam: float = 0.0, direction: int = 1, max_iter: int | None = None) -> SplineFit:
    """Monotone penalized spline fit with sorted coefficients.

    ``direction=+1`` gives a non-decreasing fit, ``-1`` a non-increasing one
    (computed as the negated increasing fit of ``-y``).
    """
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    B, y, Q, c = _normal_equations(Bm, P, y, lam)
    _cho(Q)
    J = c.size
    if J == 1:
        return fit_unconstrained(Bm, P, y, lam)
    sc = float(direction)
    gamma, mu, iters = _active_set(Q, sc * c, max_iter or 20 * J * J + 100)
    gamma = sc * gamma
    pattern = tie_pattern(gamma)
    # stationarity on free coordinates, dual feasibility on tied ones
    scale = max(float(np.max(np.abs(c))), np.finfo(float).tiny)
    r = Q @ gamma - c
    s = _suffix_sums(sc * r)
    free = np.ones(J - 1, dtype=bool)
    for a, b in pattern:
        free[a : b - 1] = False
    stat = np.concatenate([[s[0]], s[1:][free]])
    kkt = float(np.max(np.abs(stat)) / scale)
    kkt = max(kkt, float(max(0.0, -np.min(s[1:], initial=0.0))) / scale)
    starts = np.array([a for a, _ in pattern])
    BtB = B.T @ B
    GBG = np.add.reduceat(np.add.reduceat(BtB, starts, axis=0), starts, axis=1)
    GQG = np.add.reduceat(np.add.reduceat(Q, starts, axis=0), starts, axis=1)
    # trace of the smoother with the tie pattern held fixed; equals len(pattern) at lam = 0
    edf = float(np.trace(np.linalg.solve(GQG, GBG)))
    return _finish(B, y, gamma, lam, direction, pattern, kkt, mult=2.0 * mu, edf=edf, iters=iters)


def pava(y, weights=None) -> np.ndarray:
    """Weighted non-decreasing L2 projection by pooling adjacent violators."""
    y = np.asarray(y, dtype=float).ravel()
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float).ravel()
    if w.shape != y.shape:
        raise ValueError("weights and y must have the same length")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    vals, wts, cnts = [], [], []
    for yi, wi in zip(y, w):
        vals.append(yi)
        wts.append(wi)
        cnts.append(1)
        while len(vals) > 1 and vals[-2] > vals[-1]:
            v2, w2, c2 = vals.pop(), wts.pop(), cnts.pop()
            ww = wts[-1] + w2
            vals[-1] = (vals[-1] * wts[-1] + v2 * w2) / ww
            wts[-1] = ww
            cnts[-1] += c2
    return np.repeat(vals, cnts)


@dataclass
class SOCPRecord:
    """Epigraph form: minimize z s.t. ||[y - B g; sqrt(lam) L' g]|| <= z, A g <= 0."""

    n: int
    J: int
    lam: float
    A: np.ndarray
    L: np.ndarray
    B: np.ndarray
    y: np.ndarray

    def cone_rows(self, gamma) -> np.ndarray:
        gamma = np.asarray(gamma, dtype=float)
        res = self.y - self.B @ gamma
        if self.lam == 0:
            return res
        return np.concatenate([res, np.sqrt(self.lam) * (self.L.T @ gamma)])

    def objective(self, gamma) -> float:
        u = self.cone_rows(gamma)
        return float(u @ u)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "monotone_spline_socp",
            "n": self.n,
            "J": self.J,
            "lambda": self.lam,
            "A": self.A.tolist(),
            "L": self.L.tolist(),
            "B": self.B.tolist(),
            "y": self.y.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "SOCPRecord":
        d = json.loads(text)
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {d.get('schema_version')!r}")
        J = int(d["J"])
        L = np.asarray(d["L"], dtype=float).reshape(J, -1)
        return cls(
            n=int(d["n"]),
            J=J,
            lam=float(d["lambda"]),
            A=np.asarray(d["A"], dtype=float).reshape(J - 1, J),
            L=L,
            B=np.asarray(d["B"], dtype=float).reshape(int(d["n"]), J),
            y=np.asarray(d["y"], dtype=float),
        )


def socp_rewrite(Bm, P: PenaltyMatrix, y, lam: float) -> SOCPRecord:
    B = _values(Bm)
    if P.factor is None:
        factorize(P)
    return SOCPRecord(
        n=B.shape[0],
        J=B.shape[1],
        lam=float(lam),
        A=difference_matrix(B.shape[1]),
        L=P.factor,
        B=B.copy(),
        y=np.asarray(y, dtype=float).copy(),
    )


def hat_matrix(B: np.ndarray, G: np.ndarray | None = None) -> np.ndarray:
    """Projection onto the span of ``B G'`` (``G = I`` when omitted)."""
    X = B if G is None else B @ G.T
    return X @ np.linalg.solve(X.T @ X, X.T)


@dataclass
class CrossoverResult:
    mse_monotone: float
    mse_ls: float
    threshold: float
    monotone_better: bool
    frac_monotone_better: float
    modal_pattern: list[tuple[int, int]]
    min_eig_projection_gap: float
    err_monotone: np.ndarray = field(repr=False)
    err_ls: np.ndarray = field(repr=False)


def mse_crossover_probe(truth, Bm, sigma: float, reps: int, seed: int) -> CrossoverResult:
    """Monte-Carlo MSE of monotone vs unconstrained cubic splines (``lam = 0``).

    Also returns the noise threshold ``f'(H - H_g) f / (J - g)`` above which
    the monotone fit is guaranteed better, evaluated at the most frequent tie
    pattern.
    """
    B = _values(Bm)
    f = np.asarray(truth, dtype=float)
    rng = np.random.default_rng(seed)
    em, el, pats = np.empty(reps), np.empty(reps), Counter()
    for r in range(reps):
        y = f + sigma * rng.standard_normal(f.size)
        ls = fit_unconstrained(B, None, y, 0.0)
        mono = fit_monotone(B, None, y, 0.0)
        em[r] = np.sum((mono.fitted - f) ** 2)
        el[r] = np.sum((ls.fitted - f) ** 2)
        pats[tuple(mono.tie_pattern)] += 1
    modal = list(pats.most_common(1)[0][0])
    J = B.shape[1]
    G = tie_matrix(modal, J)
    diff = hat_matrix(B) - hat_matrix(B, G)
    g = G.shape[0]
    thr = float(f @ diff @ f / (J - g)) if g < J else np.inf
    mm, ml = float(em.mean()), float(el.mean())
    return CrossoverResult(
        mse_monotone=mm,
        mse_ls=ml,
        threshold=thr,
        monotone_better=mm < ml,
        frac_monotone_better=float(np.mean(em < el)),
        modal_pattern=modal,
        min_eig_projection_gap=float(np.min(np.linalg.eigvalsh(0.5 * (diff + diff.T)))),
        err_monotone=em,
        err_ls=el,
    )
