"""
Choosing the knot count and the smoothing parameter
===================================================

Cross-validates the number of interior knots for a cubic spline and picks
the penalty weight of a smoothing spline by generalized cross-validation.
"""

import warnings

import numpy as np

from monospline import SplineModel, select_knot_count, select_lambda_gcv, criterion
from monospline.simbench import generate

x, y, f = generate("logistic", 100, 0.2, seed=3)

# two-fold CV over the interior knot count; held-out points outside the
# training knot range are dropped with a warning
with warnings.catch_warnings():
    warnings.simplefilter("ignore", UserWarning)
    rep = select_knot_count(x, y, K_grid=range(1, 11), folds=2, seed=0, monotone=True)
for K, score in zip(rep.grid, rep.scores):
    print(f"K={K:2d}  cv={score:.4f}" + ("  <- chosen" if K == rep.chosen else ""))

# GCV over a log-spaced grid of lam on smoothing knots
model = SplineModel.smoothing(x)
grid = np.exp(np.linspace(-8, -2, 13))
gcv = select_lambda_gcv(x, y, grid, model=model)
print("\nGCV choice: lam = %.3e (log lam = %.1f), df = %.2f" % (gcv.chosen, np.log(gcv.chosen), gcv.df_at_chosen))

# information criteria of the chosen fit
fit = model.fit(y, gcv.chosen)
for which in ("aic", "bic", "gcv"):
    print(f"{which}: {criterion(fit, y, which):.4f}")
