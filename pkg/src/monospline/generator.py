"""Neural solution generator ``G(y, lam) = sort(MLP(y, lam))`` for monotone splines.

The network is a small numpy MLP with hand-written backpropagation. Its
sorted output always satisfies the coefficient-ordering constraint, so every
generated curve is non-decreasing. Two training modes are provided:

* point: fixed ``y``, random ``lam``; approximates the penalized fit path;
* band: random ``lam`` and Gaussian perturbations of the fitted values, so
  the net can replace refits inside a parametric bootstrap.
"""

from __future__ import annotations

import base64
import json
import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg
from scipy.special import ndtr

from .basis import KnotSet, basis_matrix
from .solver import SCHEMA_VERSION, SplineFit
from .uncertainty import ConfidenceBand, percentile_band, replicate_streams

log = logging.getLogger(__name__)

MODEL_KIND = "monospline_generator"
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class TrainingError(RuntimeError):
    """Training produced a non-finite loss; ``net`` holds the last finite state."""

    def __init__(self, message, net=None, step=None):
        super().__init__(message)
        self.net = net
        self.step = step


@dataclass
class GeneratorConfig:
    hidden: tuple[int, ...] = (128, 64)
    lr: float = 1e-3
    batch: int = 32
    inner: int | None = None  # perturbations per lam in band mode; None means batch
    max_iter: int = 50_000
    patience: int = 2_000
    min_delta: float = 0.0  # relative improvement of the evaluation loss that counts as progress
    eval_every: int = 100
    lr_decay: float = 0.1  # step-size factor applied on each plateau
    min_lr_ratio: float = 0.01  # stop at the first plateau once lr would fall below this fraction
    lambda_sampling: str = "linear"  # or "log"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    amsgrad: bool = False
    precondition: bool = True  # whiten the output layer against the mid-range fit Hessian

    def __post_init__(self):
        if self.lambda_sampling not in ("linear", "log"):
            raise ValueError("lambda_sampling must be 'linear' or 'log'")


@dataclass
class GeneratorNet:
    """MLP weights plus the input/output transforms.

    ``weights[k]`` has shape ``(fan_in, fan_out)``. The network sees
    ``((y - in_center) / in_scale, t)`` with ``t`` the position of ``log(lam)``
    in ``log(lambda_range)``, and returns ``y_center + y_scale * sort(z)``.
    ``in_center`` may be a scalar or a per-observation vector; by default it
    is ``y_center`` and ``in_scale`` is ``y_scale * sqrt(n)``. When set,
    ``out_map`` (J x J) is a fixed linear map applied to the last layer's
    output before sorting; it only reparametrizes that layer.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    lambda_range: tuple[float, float]
    y_center: float = 0.0
    y_scale: float = 1.0
    activation: str = "gelu"
    mode: str = "point"
    knots: KnotSet | None = None
    x: np.ndarray | None = None
    training_log: list[float] = field(default_factory=list, repr=False)
    in_center: np.ndarray | float | None = None
    in_scale: float | None = None
    out_map: np.ndarray | None = field(default=None, repr=False)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def hidden(self) -> list[int]:
        return [w.shape[1] for w in self.weights[:-1]]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "GeneratorNet":
        return replace(
            self,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            training_log=list(self.training_log),
            in_center=None if self.in_center is None else np.array(self.in_center, dtype=float),
            out_map=None if self.out_map is None else self.out_map.copy(),
        )

    def input_transform(self) -> tuple[np.ndarray | float, float]:
        """``(center, scale)`` applied to ``y`` before the first layer."""
        n = self.input_dim - 1
        c = self.y_center if self.in_center is None else self.in_center
        s = self.y_scale * math.sqrt(n) if self.in_scale is None else self.in_scale
        return c, s

    def design(self, x=None) -> np.ndarray:
        if self.knots is None:
            raise ValueError("network carries no knot set")
        return basis_matrix(self.knots, self.x if x is None else x)

    def lambda_feature(self, lam) -> np.ndarray:
        lo, hi = np.log(self.lambda_range[0]), np.log(self.lambda_range[1])
        lam = np.asarray(lam, dtype=float)
        return (np.log(lam) - lo) / (hi - lo) if hi > lo else np.zeros_like(lam)

    # serialization

    def to_dict(self) -> dict:
        def enc(a):
            return {"shape": list(a.shape), "data": base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode()}

        d = {
            "schema_version": SCHEMA_VERSION,
            "kind": MODEL_KIND,
            "mode": self.mode,
            "activation": self.activation,
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "hidden": self.hidden,
            "lambda_range": [float(v) for v in self.lambda_range],
            "y_center": float(self.y_center),
            "y_scale": float(self.y_scale),
            "weights": [enc(w) for w in self.weights],
            "biases": [enc(b) for b in self.biases],
            "training_log": [float(v) for v in self.training_log],
        }
        if self.knots is not None:
            d["knots"] = {"lower": self.knots.lower, "upper": self.knots.upper, "interior": self.knots.interior.tolist()}
        if self.x is not None:
            d["x"] = enc(np.asarray(self.x, dtype=float))
        if self.in_center is not None:
            d["in_center"] = enc(np.atleast_1d(np.asarray(self.in_center, dtype=float)))
        if self.in_scale is not None:
            d["in_scale"] = float(self.in_scale)
        if self.out_map is not None:
            d["out_map"] = enc(self.out_map)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorNet":
        if d.get("kind") != MODEL_KIND:
            raise ValueError(f"not a generator model: kind={d.get('kind')!r}")
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {d.get('schema_version')!r}")

        def dec(e):
            return np.frombuffer(base64.b64decode(e["data"]), dtype="<f8").astype(float).reshape(e["shape"])

        knots = None
        if "knots" in d:
            k = d["knots"]
            knots = KnotSet.from_breakpoints(k["lower"], k["upper"], k["interior"])
        return cls(
            weights=[dec(e) for e in d["weights"]],
            biases=[dec(e) for e in d["biases"]],
            lambda_range=tuple(d["lambda_range"]),
            y_center=d["y_center"],
            y_scale=d["y_scale"],
            activation=d["activation"],
            mode=d["mode"],
            knots=knots,
            x=dec(d["x"]) if "x" in d else None,
            training_log=list(d.get("training_log", [])),
            in_center=dec(d["in_center"]) if "in_center" in d else None,
            in_scale=d.get("in_scale"),
            out_map=dec(d["out_map"]) if "out_map" in d else None,
        )

    @classmethod
    def from_json(cls, text: str) -> "GeneratorNet":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "GeneratorNet":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def init_net(n: int, J: int, lambda_range, hidden=(128, 64), seed: int = 0,
             y_center: float = 0.0, y_scale: float = 1.0) -> GeneratorNet:
    """He-normal hidden layers, small output layer, zero biases."""
    rng = np.random.default_rng(seed)
    sizes = [n + 1, *hidden, J]
    weights, biases = [], []
    for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        std = math.sqrt(2.0 / a) if k < len(sizes) - 2 else 0.1 / math.sqrt(a)
        weights.append(rng.normal(0.0, std, size=(a, b)))
        biases.append(np.zeros(b))
    return GeneratorNet(weights, biases, (float(lambda_range[0]), float(lambda_range[1])), y_center, y_scale)


def _gelu(a):
    return a * ndtr(a)


def _gelu_grad(a):
    return ndtr(a) + a * _INV_SQRT_2PI * np.exp(-0.5 * a * a)


def _inputs(net: GeneratorNet, Y, lams) -> np.ndarray:
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    lams = np.broadcast_to(np.asarray(lams, dtype=float), (Y.shape[0],))
    if Y.shape[1] + 1 != net.input_dim:
        raise ValueError(f"expected y of length {net.input_dim - 1}, got {Y.shape[1]}")
    lo, hi = net.lambda_range
    if np.any((lams < lo * (1 - 1e-12)) | (lams > hi * (1 + 1e-12))):
        warnings.warn("lambda outside the training range", stacklevel=3)
    c, s = net.input_transform()
    feats = (Y - c) / s
    return np.column_stack([feats, net.lambda_feature(lams)])


def _forward_cache(net: GeneratorNet, U: np.ndarray):
    acts = [U]
    pre = []
    h = U
    L = len(net.weights)
    for k in range(L):
        a = h @ net.weights[k] + net.biases[k]
        if k < L - 1:
            pre.append(a)
            h = _gelu(a)
            acts.append(h)
        else:
            z = a if net.out_map is None else a @ net.out_map
    perm = np.argsort(z, axis=1, kind="stable")
    zs = np.take_along_axis(z, perm, axis=1)
    return acts, pre, perm, net.y_center + net.y_scale * zs


def forward_batch(net: GeneratorNet, Y, lams) -> np.ndarray:
    """Sorted coefficient vectors for each row of ``Y`` with its ``lam``."""
    return _forward_cache(net, _inputs(net, Y, lams))[3]


def forward(net: GeneratorNet, y, lam: float) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise ValueError("y must be a vector")
    return forward_batch(net, y[None, :], [lam])[0]


def sort_gradient(v, upstream) -> np.ndarray:
    """Gradient of ``sum(upstream * sort(v))`` with respect to ``v`` (stable ties)."""
    v = np.asarray(v, dtype=float)
    upstream = np.asarray(upstream, dtype=float)
    perm = np.argsort(v, kind="stable")
    g = np.empty_like(upstream)
    g[perm] = upstream
    return g


def loss_and_grad(net: GeneratorNet, Y, lams, Bmat: np.ndarray, omega: np.ndarray, need_grad: bool = True):
    """Mean of ``||y - B g||^2 + lam g' Omega g`` over rows and its parameter gradient.

    Returns ``(loss, grads)`` with ``grads`` ordered like ``net.params()``.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    lams = np.broadcast_to(np.asarray(lams, dtype=float), (Y.shape[0],))
    m = Y.shape[0]
    acts, pre, perm, G = _forward_cache(net, _inputs(net, Y, lams))
    R = Y - G @ Bmat.T
    OG = G @ omega
    loss = float((np.sum(R * R) + np.sum(lams[:, None] * G * OG)) / m)
    if not need_grad:
        return loss, None
    dG = (-2.0 * R @ Bmat + 2.0 * lams[:, None] * OG) / m
    dzs = net.y_scale * dG
    dz = np.empty_like(dzs)
    np.put_along_axis(dz, perm, dzs, axis=1)
    if net.out_map is not None:
        dz = dz @ net.out_map.T
    grads = [None] * (2 * len(net.weights))
    delta = dz
    for k in range(len(net.weights) - 1, -1, -1):
        grads[2 * k] = acts[k].T @ delta
        grads[2 * k + 1] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ net.weights[k].T) * _gelu_grad(pre[k - 1])
    return loss, grads


class _Adam:
    def __init__(self, params, cfg: GeneratorConfig):
        self.cfg = cfg
        self.lr = cfg.lr
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.vmax = [np.zeros_like(p) for p in params] if cfg.amsgrad else None
        self.t = 0

    def step(self, params, grads):
        c = self.cfg
        self.t += 1
        b1t = 1.0 - c.beta1**self.t
        b2t = 1.0 - c.beta2**self.t
        for k, (p, g, m, v) in enumerate(zip(params, grads, self.m, self.v)):
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            if self.vmax is not None:
                np.maximum(self.vmax[k], v, out=self.vmax[k])
                v = self.vmax[k]
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + c.eps)


def sample_lambdas(rng: np.random.Generator, lambda_range, size: int, how: str = "linear") -> np.ndarray:
    lo, hi = lambda_range
    if how == "log":
        return np.exp(rng.uniform(np.log(lo), np.log(hi), size))
    return rng.uniform(lo, hi, size)


def _train(net: GeneratorNet, batch_fn, eval_set, Bmat, omega, cfg: GeneratorConfig, rng) -> GeneratorNet:
    """Adam on random batches; stops once the loss on the fixed ``eval_set``
    has not reached a new best for ``cfg.patience`` steps and returns the best
    evaluated state."""
    opt = _Adam(net.params(), cfg)
    Ye, le = eval_set
    best_loss, best_net, since = math.inf, net.copy(), 0
    for step in range(cfg.max_iter):
        Y, lams = batch_fn(rng)
        loss, grads = loss_and_grad(net, Y, lams, Bmat, omega)
        if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
            raise TrainingError(f"non-finite loss at step {step}", net=best_net, step=step)
        net.training_log.append(loss)
        opt.step(net.params(), grads)
        if (step + 1) % cfg.eval_every == 0:
            ev = loss_and_grad(net, Ye, le, Bmat, omega, need_grad=False)[0]
            if ev < best_loss * (1.0 - cfg.min_delta):
                best_loss, best_net, since = ev, net.copy(), 0
            else:
                since += cfg.eval_every
                if since >= cfg.patience:
                    if opt.lr * cfg.lr_decay < cfg.lr * cfg.min_lr_ratio * (1 - 1e-12):
                        log.info("plateau after %d steps", step + 1)
                        break
                    # resume from the best state with a smaller step
                    for p, b in zip(net.params(), best_net.params()):
                        p[...] = b
                    opt.lr *= cfg.lr_decay
                    since = 0
    if best_loss < math.inf:
        net.weights, net.biases = best_net.weights, best_net.biases
    return net


def _quadrature_lambdas(lambda_range, count: int, how: str) -> np.ndarray:
    """Midpoint nodes of the lam sampling distribution."""
    u = (np.arange(count) + 0.5) / count
    lo, hi = lambda_range
    if how == "log":
        return np.exp(np.log(lo) + u * (np.log(hi) - np.log(lo)))
    return lo + u * (hi - lo)


def _output_map(Bmat: np.ndarray, omega: np.ndarray, lam: float) -> np.ndarray:
    """``inv(C)`` with ``C C' = B'B + lam * Omega``, so the loss Hessian seen by the
    last layer is the identity at ``lam``."""
    C = np.linalg.cholesky(Bmat.T @ Bmat + lam * omega)
    return linalg.solve_triangular(C, np.eye(C.shape[0]), lower=True)


def _scalers(y: np.ndarray) -> tuple[float, float]:
    s = float(np.std(y))
    return float(np.mean(y)), s if s > 0 else 1.0


def train_point_generator(x, y, knots: KnotSet, P, lambda_range, config: GeneratorConfig | None = None,
                          seed: int = 0) -> GeneratorNet:
    """Fit the net to minimize the penalized loss at fixed ``y`` averaged over random ``lam``."""
    cfg = config or GeneratorConfig()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    Bmat = basis_matrix(knots, x)
    omega = P.omega if hasattr(P, "omega") else np.asarray(P, dtype=float)
    rng = np.random.default_rng(seed)
    c, s = _scalers(y)
    net = init_net(y.size, knots.J, lambda_range, cfg.hidden, int(rng.integers(2**63)), c, s)
    net.knots, net.x, net.mode = knots, x.copy(), "point"
    # start the output near the sorted ridge solution at the geometric-mid lam
    lam_mid = math.sqrt(lambda_range[0] * lambda_range[1])
    g0 = np.linalg.lstsq(Bmat.T @ Bmat + lam_mid * omega, Bmat.T @ y, rcond=None)[0]
    target = np.sort((g0 - c) / s)
    if cfg.precondition:
        net.out_map = _output_map(Bmat, omega, lam_mid)
        net.biases[-1] = np.linalg.solve(net.out_map.T, target)
    else:
        net.biases[-1] = target
    Yb = np.broadcast_to(y, (cfg.batch, y.size))

    def batch(r):
        return Yb, sample_lambdas(r, lambda_range, cfg.batch, cfg.lambda_sampling)

    eval_set = (Yb, _quadrature_lambdas(lambda_range, cfg.batch, cfg.lambda_sampling))
    return _train(net, batch, eval_set, Bmat, omega, cfg, rng)


def train_band_generator(x, y, knots: KnotSet, P, lambda_range, config: GeneratorConfig | None,
                         point_net: GeneratorNet, seed: int = 0) -> GeneratorNet:
    """Fit the net on perturbed responses ``y_hat(lam) + e``, ``e ~ N(0, sigma_hat(lam)^2 I)``.

    ``y_hat(lam)`` and ``sigma_hat(lam)`` (ddof=1) come from the frozen point
    net. Each step draws ``batch`` values of ``lam`` and ``inner`` perturbations
    per value. Training starts from a copy of the point net.
    """
    if point_net is None or point_net.mode != "point":
        raise ValueError("band training needs a trained point generator")
    cfg = config or GeneratorConfig()
    inner = cfg.inner or cfg.batch
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    Bmat = basis_matrix(knots, x)
    omega = P.omega if hasattr(P, "omega") else np.asarray(P, dtype=float)
    rng = np.random.default_rng(seed)
    net = point_net.copy()
    net.mode, net.training_log = "band", []
    def perturbed(r, lams, k):
        yhat = forward_batch(point_net, np.broadcast_to(y, (lams.size, y.size)), lams) @ Bmat.T
        sig = np.std(y - yhat, axis=1, ddof=1)
        E = r.standard_normal((lams.size, k, y.size)) * sig[:, None, None]
        return (yhat[:, None, :] + E).reshape(-1, y.size), np.repeat(lams, k)

    def batch(r):
        return perturbed(r, sample_lambdas(r, lambda_range, cfg.batch, cfg.lambda_sampling), inner)

    eval_rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    eval_set = perturbed(eval_rng, _quadrature_lambdas(lambda_range, 8, cfg.lambda_sampling), 8)
    return _train(net, batch, eval_set, Bmat, omega, cfg, rng)


def band_from_generator(net: GeneratorNet, y_hat, sigma_hat: float, lam: float, B: int, alpha: float,
                        seed: int, Bmat: np.ndarray | None = None) -> ConfidenceBand:
    """Percentile band of ``B`` generated curves at perturbed inputs ``y_hat + e``."""
    y_hat = np.asarray(y_hat, dtype=float)
    Bmat = net.design() if Bmat is None else Bmat
    streams = replicate_streams(seed, B)
    E = np.vstack([r.standard_normal(y_hat.size) for r in streams])
    G = forward_batch(net, y_hat + sigma_hat * E, lam)
    curves = G @ Bmat.T
    x = net.x if net.x is not None else np.arange(y_hat.size, dtype=float)
    if B == 1:
        return ConfidenceBand(x, curves[0], curves[0], 1 - alpha, 1, "parametric", "generator")
    lo, hi = percentile_band(curves, alpha)
    return ConfidenceBand(x, lo, hi, 1 - alpha, B, "parametric", "generator")


def generator_band(net: GeneratorNet, y, lam: float, B: int, alpha: float, seed: int,
                   Bmat: np.ndarray | None = None) -> ConfidenceBand:
    """Band centred on the net's own fit ``y_hat = B G(y, lam)`` with ``sigma_hat = sd(y - y_hat)``."""
    y = np.asarray(y, dtype=float)
    Bmat = net.design() if Bmat is None else Bmat
    y_hat = Bmat @ forward(net, y, lam)
    return band_from_generator(net, y_hat, float(np.std(y - y_hat, ddof=1)), lam, B, alpha, seed, Bmat)


@dataclass
class GapReport:
    lambdas: np.ndarray
    relative_gap: np.ndarray
    fitness_ratio: np.ndarray

    @property
    def mean_gap(self) -> float:
        return float(np.mean(self.relative_gap))

    @property
    def mean_ratio(self) -> float:
        return float(np.mean(self.fitness_ratio))

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "lambdas": self.lambdas.tolist(),
            "relative_gap": self.relative_gap.tolist(),
            "fitness_ratio": self.fitness_ratio.tolist(),
            "mean_relative_gap": self.mean_gap,
            "mean_fitness_ratio": self.mean_ratio,
        }


def gap_report(net: GeneratorNet, y, lambda_grid, opt_fits: list[SplineFit],
               Bmat: np.ndarray | None = None) -> GapReport:
    """Relative gap ``||B(G - g)||^2 / ||B g||^2`` and fitness ratio
    ``||y - B G||^2 / ||y - B g||^2`` against optimizer fits ``g``."""
    y = np.asarray(y, dtype=float)
    lams = np.asarray(lambda_grid, dtype=float)
    if len(opt_fits) != lams.size or any(not np.isclose(f.lam, l, rtol=1e-12, atol=0) for f, l in zip(opt_fits, lams)):
        raise ValueError("opt_fits do not match lambda_grid")
    Bmat = net.design() if Bmat is None else Bmat
    G = forward_batch(net, np.broadcast_to(y, (lams.size, y.size)), lams)
    gen = G @ Bmat.T
    opt = np.vstack([Bmat @ f.gamma for f in opt_fits])
    gap = np.sum((gen - opt) ** 2, axis=1) / np.sum(opt**2, axis=1)
    ratio = np.sum((y - gen) ** 2, axis=1) / np.sum((y - opt) ** 2, axis=1)
    return GapReport(lams, gap, ratio)


def even_lambda_grid(lambda_range, count: int = 10, spacing: str = "log") -> np.ndarray:
    lo, hi = lambda_range
    if spacing == "log":
        return np.exp(np.linspace(np.log(lo), np.log(hi), count))
    return np.linspace(lo, hi, count)
