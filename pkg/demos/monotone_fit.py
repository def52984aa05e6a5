"""
Monotone cubic and smoothing spline fits
========================================

Fits noisy samples of an increasing curve with and without the shape
constraint and shows where the constrained solution ties coefficients.
"""

import numpy as np

from monospline import SplineModel, pava
from monospline.monotonicity import exact_monotone
from monospline.simbench import generate

x, y, f = generate("cubic", 100, 0.5, seed=1)
order = np.argsort(x)

# monotone cubic spline with quantile knots, no penalty
model = SplineModel.cubic(x, K=8)
mono = model.fit(y, lam=0.0)
free = model.fit(y, lam=0.0, monotone=False)
print("monotone cubic:     tie blocks", mono.tie_pattern, " edf", mono.edf)
print("unconstrained cubic: monotone?", exact_monotone(model.knots, free.gamma).is_monotone)
print("rss monotone / free:", float(np.sum((y - mono.fitted) ** 2) / np.sum((y - free.fitted) ** 2)))

# penalized fits on smoothing knots; larger lam gives a flatter curve
smooth = SplineModel.smoothing(x)
for lam in (np.exp(-8), np.exp(-5), np.exp(-2)):
    fit = smooth.fit(y, lam)
    mse = float(np.mean((fit.fitted - f) ** 2))
    print(f"lam={lam:.2e}: edf={fit.edf:6.2f}  mse vs truth={mse:.4f}  iterations={fit.iterations}")

# a decreasing fit of the reversed data mirrors the increasing fit
down = model.fit(-y, lam=0.0, direction=-1)
print("direction symmetry:", np.allclose(down.fitted, -mono.fitted, atol=1e-8))

# isotonic regression for comparison (step function on sorted x)
iso = pava(y[order])
print("isotonic mse vs truth:", float(np.mean((iso - f[order]) ** 2)))
