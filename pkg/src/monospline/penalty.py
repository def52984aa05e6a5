"""Roughness penalty matrix and its rank-revealing factorization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import KnotSet, second_derivative_matrix

# 2-point Gauss-Legendre on [-1, 1]; exact for the quadratic integrands here
_GL_NODES = np.array([-1.0, 1.0]) / np.sqrt(3.0)
_GL_WEIGHTS = np.array([1.0, 1.0])


class FactorizationError(np.linalg.LinAlgError):
    pass


@dataclass
class PenaltyMatrix:
    """``omega[j, k] = integral of B_j'' B_k''`` over the knot domain.

    ``factor`` is filled lazily by :func:`factorize` and has shape ``(J, r)``
    with ``r`` the numerical rank.
    """

    omega: np.ndarray
    factor: np.ndarray | None = field(default=None, repr=False)
    bandwidth: int = 3

    @property
    def J(self) -> int:
        return self.omega.shape[0]

    def quadratic(self, gamma) -> float:
        gamma = np.asarray(gamma, dtype=float)
        return float(gamma @ self.omega @ gamma)


def penalty_matrix(knots: KnotSet) -> PenaltyMatrix:
    bp = knots.breakpoints
    lo, hi = bp[:-1], bp[1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    pts = (mid[:, None] + half[:, None] * _GL_NODES).ravel()
    wts = (half[:, None] * _GL_WEIGHTS).ravel()
    D2 = second_derivative_matrix(knots, pts)
    omega = D2.T @ (wts[:, None] * D2)
    omega = 0.5 * (omega + omega.T)
    # exact zeros outside the band
    J = knots.J
    jj, kk = np.indices((J, J))
    omega[np.abs(jj - kk) > 3] = 0.0
    return PenaltyMatrix(omega=omega)


def pivoted_cholesky(a: np.ndarray, rtol: float | None = None) -> np.ndarray:
    """Outer-product Cholesky with diagonal pivoting, truncated at zero pivots.

    Returns ``L`` of shape ``(n, r)`` with ``L @ L.T`` approximating ``a``.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    scale = float(np.max(np.abs(np.diag(a)))) if n else 0.0
    if scale == 0.0:
        return np.zeros((n, 0))
    tol = (n * np.finfo(float).eps if rtol is None else rtol) * scale
    perm = np.arange(n)
    L = np.zeros((n, n))
    r = 0
    for k in range(n):
        d = np.diag(a)[k:]
        p = k + int(np.argmax(d))
        if d[p - k] <= tol:
            break
        if p != k:
            a[[k, p]] = a[[p, k]]
            a[:, [k, p]] = a[:, [p, k]]
            L[[k, p]] = L[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        piv = np.sqrt(a[k, k])
        L[k, k] = piv
        L[k + 1 :, k] = a[k + 1 :, k] / piv
        a[k + 1 :, k + 1 :] -= np.outer(L[k + 1 :, k], L[k + 1 :, k])
        r += 1
    out = np.zeros((n, r))
    out[perm] = L[:, :r]
    return out


def factorize(P: PenaltyMatrix, rtol: float = 1e-9) -> np.ndarray:
    """Factor ``omega = L @ L.T`` and cache ``L`` on ``P``.

    Raises:
        FactorizationError: if the reconstruction is off by more than
            ``rtol`` in relative Frobenius norm.
    """
    L = pivoted_cholesky(P.omega)
    norm = np.linalg.norm(P.omega)
    if norm > 0:
        err = np.linalg.norm(L @ L.T - P.omega) / norm
        if not err <= rtol:
            raise FactorizationError(f"penalty factorization residual {err:.3e} exceeds {rtol:.1e}")
    P.factor = L
    return L
