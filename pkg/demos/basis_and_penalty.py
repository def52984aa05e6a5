"""
Cubic B-spline basis, curvature penalty and monotonicity checks
================================================================

Builds a clamped cubic basis on quantile knots, inspects the roughness
penalty and compares the three monotonicity tests on a few coefficient
vectors.
"""

import numpy as np

from monospline import make_knots, basis_matrix, penalty_matrix, factorize
from monospline.monotonicity import condition_nesting_check

rng = np.random.default_rng(0)
x = np.sort(rng.uniform(-1, 1, 200))

# six interior knots give J = K + 4 = 10 basis functions
knots = make_knots(x, K=6)
B = basis_matrix(knots, x)
print("design shape:", B.shape)
print("rows sum to one:", np.allclose(B.sum(axis=1), 1.0))

# the curvature penalty is banded (bandwidth 3) and has a two-dimensional null space
P = penalty_matrix(knots)
omega = P.omega
print("penalty bandwidth:", max(abs(i - j) for i, j in zip(*np.nonzero(np.abs(omega) > 1e-12))))
print("smallest eigenvalues:", np.round(np.linalg.eigvalsh(omega)[:3], 10))

# coefficients at the Greville abscissae reproduce a straight line, which has no curvature
t = knots.augmented
line = (t[1:-3] + t[2:-2] + t[3:-1]) / 3
print("penalty of a line:", float(line @ omega @ line))

# low-rank factor with L L' = omega
L = factorize(P)
print("factor shape:", L.shape, " reconstruction error:", np.abs(L @ L.T - omega).max())

# sufficient (nondecreasing coefficients) => exact => necessary (end derivatives)
for name, gamma in [
    ("increasing", np.cumsum(rng.uniform(0, 1, knots.J))),
    ("small dip", np.arange(knots.J) - 1.05 * (np.arange(knots.J) == 5)),
    ("large dip", np.arange(knots.J) - 3.0 * (np.arange(knots.J) == 5)),
    ("decreasing", -np.arange(knots.J, dtype=float)),
]:
    suff, exact, nec = condition_nesting_check(knots, gamma)
    print(f"{name:>10}: sufficient={suff} exact={exact} necessary={nec}")
