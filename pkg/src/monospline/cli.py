"""Command-line front end: ``fit``, ``band``, ``simulate`` and ``train-gen``.

Exit codes: 0 success, 2 bad input or arguments, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .basis import DegenerateDomainError, DomainError, KnotSet
from .generator import GeneratorConfig, GeneratorNet, TrainingError, even_lambda_grid, gap_report, generator_band
from .model import SplineModel
from .monotonicity import condition_nesting_check
from .selection import DEFAULT_LAMBDA_RANGE, select_knot_count, select_lambda_gcv
from .simbench import CURVES, METHOD_ALIASES, run_study
from .solver import SCHEMA_VERSION, RankDeficiencyError, SolverError
from .uncertainty import ConfidenceBand, FitConfig, band_nonparametric, band_parametric, coverage_probability, jaccard_band

log = logging.getLogger("monospline")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
_NUMERIC_ERRORS = (RankDeficiencyError, SolverError, np.linalg.LinAlgError)


class InputError(ValueError):
    pass


def read_columns(path, required=("x", "y")) -> dict[str, np.ndarray]:
    """Read a headed comma-separated file; every value must be a finite number."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise InputError(f"{path}: empty file")
        header = [h.strip() for h in header]
        missing = [c for c in required if c not in header]
        if missing:
            raise InputError(f"{path}: header {header} lacks column(s) {missing}")
        cols = {c: [] for c in header}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not v.strip() for v in row):
                continue
            if len(row) != len(header):
                raise InputError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
            for name, raw in zip(header, row):
                try:
                    v = float(raw)
                except ValueError:
                    raise InputError(f"{path}: row {lineno}, column {name!r}: cannot parse {raw!r}") from None
                if not math.isfinite(v):
                    raise InputError(f"{path}: row {lineno}, column {name!r}: non-finite value {raw!r}")
                cols[name].append(v)
    out = {k: np.asarray(v, dtype=float) for k, v in cols.items()}
    if out[required[0]].size == 0:
        raise InputError(f"{path}: no data rows")
    return out


def _write_csv(path: Path, header, columns) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([repr(float(v)) for v in row])


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _seed(args) -> int:
    if args.seed is not None:
        return int(args.seed)
    env = os.environ.get("MONOSPLINE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise InputError(f"MONOSPLINE_SEED must be an integer, got {env!r}") from None
    return 0


def _direction(name: str) -> int:
    return {"increasing": 1, "decreasing": -1}[name]


def _knots_json(k: KnotSet) -> dict:
    return {"lower": k.lower, "upper": k.upper, "interior": k.interior.tolist()}


def _run_config(args, seed: int) -> dict:
    d = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    d["seed"] = seed
    return {"schema_version": SCHEMA_VERSION, "command": args.command, "config": d}


def _resolve_fit(x, y, args, seed):
    """Build the model and pick ``lam`` per ``--nknots`` / ``--lambda``; returns (model, lam, selection)."""
    selection = None
    direction = _direction(args.direction)
    if args.nknots is None:
        model = SplineModel.smoothing(x)
    elif args.nknots == "auto":
        rep = select_knot_count(x, y, folds=args.folds, seed=seed, monotone=not args.unconstrained)
        selection = {"criterion": rep.criterion, "grid": rep.grid.tolist(), "scores": rep.scores.tolist(),
                     "chosen": rep.chosen, "dropped": rep.dropped}
        model = SplineModel.cubic(x, int(rep.chosen))
    else:
        model = SplineModel.cubic(x, int(args.nknots))
    lam_arg = args.lam if args.lam is not None else ("gcv" if args.nknots is None else "0")
    if lam_arg == "gcv":
        rep = select_lambda_gcv(x, y, model=model, monotone=not args.unconstrained, direction=direction)
        selection = {"criterion": rep.criterion, "grid": rep.grid.tolist(), "scores": rep.scores.tolist(),
                     "chosen": rep.chosen, "df_at_chosen": rep.df_at_chosen}
        lam = rep.chosen
    else:
        lam = float(lam_arg)
    return model, lam, selection


def cmd_fit(args) -> int:
    seed = _seed(args)
    data = read_columns(args.input)
    x, y = data["x"], data["y"]
    model, lam, selection = _resolve_fit(x, y, args, seed)
    fit = model.fit(y, lam, monotone=not args.unconstrained, direction=_direction(args.direction))
    gamma = fit.gamma if fit.direction >= 0 else -fit.gamma
    suff, exact, nece = condition_nesting_check(model.knots, gamma)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "fit.json", {
        "schema_version": SCHEMA_VERSION,
        "gamma": fit.gamma.tolist(),
        "knots": _knots_json(model.knots),
        "lambda": fit.lam,
        "direction": args.direction,
        "monotone": not args.unconstrained,
        "df": fit.df,
        "edf": fit.edf,
        "sigma_hat": fit.residual_sd,
        "rss": fit.rss,
        "kkt_residual": fit.kkt_residual,
        "tie_pattern": [list(b) for b in fit.tie_pattern],
        "conditions": {"sufficient": suff, "exact": exact, "necessary": nece},
        "selection": selection,
        "seed": seed,
    })
    _write_csv(out / "fitted.csv", ["x", "fitted"], [x, fit.fitted])
    _write_json(out / "config.json", _run_config(args, seed))
    print(f"fit: J={model.J} lambda={fit.lam:.6g} df={fit.df} -> {out}")
    return EXIT_OK


def _aligned(path, x, name):
    cols = read_columns(path, ("x",))
    vals = cols.get(name)
    if vals is None:
        other = [c for c in cols if c != "x"]
        if len(other) != 1:
            raise InputError(f"{path}: expected a column {name!r}")
        vals = cols[other[0]]
    if cols["x"].shape != x.shape or not np.allclose(cols["x"], x, rtol=0, atol=1e-12):
        raise InputError(f"{path}: x column does not match the input data")
    return vals


def cmd_band(args) -> int:
    seed = _seed(args)
    data = read_columns(args.input)
    x, y = data["x"], data["y"]
    if args.method == "generator":
        if not args.model or not Path(args.model).is_file():
            raise InputError("--method generator needs an existing --model file")
        net = GeneratorNet.load(args.model)
        if net.mode != "band":
            raise InputError(f"{args.model}: model was trained in {net.mode!r} mode, need 'band'")
        if net.x is None or net.x.shape != x.shape or not np.allclose(net.x, x, rtol=0, atol=1e-12):
            raise InputError("input x differs from the data the generator was trained on")
        lam = float(args.lam if args.lam not in (None, "gcv") else math.sqrt(net.lambda_range[0] * net.lambda_range[1]))
        band = generator_band(net, y, lam, args.B, args.alpha, seed)
    else:
        model, lam, _ = _resolve_fit(x, y, args, seed)
        K = None if args.nknots is None else model.knots.K
        cfg = FitConfig(lam=lam, K=K, direction=_direction(args.direction), monotone=not args.unconstrained)
        fn = band_parametric if args.method == "param" else band_nonparametric
        band = fn(x, y, cfg, args.B, args.alpha, seed, workers=args.threads)
    meta = {
        "schema_version": SCHEMA_VERSION,
        "method": args.method,
        "B": args.B,
        "alpha": args.alpha,
        "seed": seed,
        "lambda": lam,
        "failures": band.failures,
        "coverage": None,
        "jaccard": None,
    }
    if args.truth:
        meta["coverage"] = coverage_probability(band, _aligned(args.truth, x, "truth"))
    if args.compare:
        with open(args.compare, encoding="utf-8") as fh:
            try:
                other = ConfidenceBand.from_csv(fh.read())
            except ValueError as exc:
                raise InputError(f"{args.compare}: {exc}") from None
        try:
            meta["jaccard"] = jaccard_band(band, other)
        except ValueError as exc:
            raise InputError(f"{args.compare}: {exc}") from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "band.csv").write_text(band.to_csv(), encoding="utf-8")
    _write_json(out / "band.json", meta)
    _write_json(out / "config.json", _run_config(args, seed))
    print(f"band: {args.method} B={args.B} level={1 - args.alpha:g} -> {out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    seed = _seed(args)
    if args.curve not in CURVES:
        raise InputError(f"unknown curve {args.curve!r}; valid curves: {', '.join(sorted(CURVES))}")
    methods = []
    for m in args.methods.split(","):
        key = m.strip().lower()
        if key not in METHOD_ALIASES:
            raise InputError(f"unknown method {m!r}; valid: {', '.join(sorted(METHOD_ALIASES))}")
        methods.append(METHOD_ALIASES[key])
    try:
        sigmas = [float(s) for s in args.sigma.split(",")]
    except ValueError:
        raise InputError(f"--sigma must be a comma-separated list of numbers, got {args.sigma!r}") from None
    reps = args.reps if args.reps is not None else (20 if args.fast else 100)
    report = run_study(args.curve, sigmas, methods, reps=reps, n=args.n, seed=seed, workers=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    (out / "report.txt").write_text(report.to_table(), encoding="utf-8")
    _write_json(out / "config.json", _run_config(args, seed))
    print(report.to_table(), end="")
    return EXIT_OK


def _lambda_range(text) -> tuple[float, float]:
    if text is None:
        return DEFAULT_LAMBDA_RANGE
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise InputError(f"--lambda-range must be 'lo,hi', got {text!r}") from None
    if not 0 < lo <= hi:
        raise InputError("--lambda-range needs 0 < lo <= hi")
    return lo, hi


def cmd_train_gen(args) -> int:
    from .generator import train_band_generator, train_point_generator

    seed = _seed(args)
    data = read_columns(args.input)
    x, y = data["x"], data["y"]
    lr = _lambda_range(args.lambda_range)
    cfg = GeneratorConfig(max_iter=args.max_iter, lambda_sampling=args.lambda_sampling, inner=args.inner,
                          batch=args.batch)
    model = SplineModel.smoothing(x)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        if args.mode == "band":
            if not args.point_model or not Path(args.point_model).is_file():
                raise InputError("--mode band needs an existing --point-model trained in point mode")
            point = GeneratorNet.load(args.point_model)
            if point.mode != "point":
                raise InputError(f"{args.point_model} is not a point-mode model")
            P = SplineModel.build(x, point.knots).penalty
            net = train_band_generator(x, y, point.knots, P, lr, cfg, point, seed)
        else:
            net = train_point_generator(x, y, model.knots, model.penalty, lr, cfg, seed)
    except TrainingError as exc:
        log_path = out.with_suffix(".trainlog.json")
        _write_json(log_path, {"schema_version": SCHEMA_VERSION, "error": str(exc), "step": exc.step,
                               "training_log": exc.net.training_log if exc.net is not None else []})
        print(f"error: {exc}; training log written to {log_path}", file=sys.stderr)
        return EXIT_NUMERIC
    net.save(out)
    m = SplineModel.build(x, net.knots)
    grid = even_lambda_grid(lr, 10, args.gap_spacing)
    fits = [m.fit(y, lam) for lam in grid]
    rep = gap_report(net, y, grid, fits, m.B)
    gap_path = out.with_suffix(".gap.json")
    _write_json(gap_path, rep.to_dict())
    _write_json(out.with_suffix(".config.json"), _run_config(args, seed))
    print(f"train-gen: {args.mode} steps={len(net.training_log)} mean ratio={rep.mean_ratio:.4f} "
          f"mean gap={rep.mean_gap:.3e} -> {out}")
    return EXIT_OK


def _add_fit_args(p):
    p.add_argument("--input", required=True, help="CSV with header x,y")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--nknots", default=None,
                   help="interior knot count for quantile knots, or 'auto' for 2-fold CV; omit for smoothing knots")
    p.add_argument("--lambda", dest="lam", default=None, help="penalty value or 'gcv'")
    p.add_argument("--direction", choices=("increasing", "decreasing"), default="increasing")
    p.add_argument("--unconstrained", action="store_true", help="drop the monotonicity constraint")
    p.add_argument("--folds", type=int, default=2)
    p.add_argument("--seed", type=int, default=None, help="defaults to $MONOSPLINE_SEED, then 0")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="monospline", description="Monotone cubic B-spline fitting")
    ap.add_argument("--config", help="JSON file of option defaults (a previous config.json works)")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    ap.subcommands = sub.choices

    p = sub.add_parser("fit", help="fit a (monotone) spline to x,y data")
    _add_fit_args(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("band", help="bootstrap confidence band")
    _add_fit_args(p)
    p.add_argument("--method", choices=("param", "nonparam", "generator"), default="param")
    p.add_argument("--B", type=int, default=200)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--model", help="band-mode generator JSON (for --method generator)")
    p.add_argument("--truth", help="CSV with x and truth columns aligned with the input")
    p.add_argument("--compare", help="band CSV (x,lower,upper) to compare against")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_band)

    p = sub.add_parser("simulate", help="simulation study on a test curve")
    p.add_argument("--curve", required=True)
    p.add_argument("--sigma", default="1.5", help="comma-separated noise levels")
    p.add_argument("--reps", type=int, default=None, help="defaults to 100, or 20 with --fast")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--methods", default="cs,mcs,ss,mss,iso")
    p.add_argument("--fast", action="store_true", help="20 repetitions")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train-gen", help="train a neural solution generator")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--mode", choices=("point", "band"), default="point")
    p.add_argument("--point-model", help="trained point model (required for --mode band)")
    p.add_argument("--lambda-range", default=None, help="lo,hi (default exp(-8),exp(-2))")
    p.add_argument("--lambda-sampling", choices=("linear", "log"), default="linear")
    p.add_argument("--gap-spacing", choices=("linear", "log"), default="linear")
    p.add_argument("--max-iter", type=int, default=50_000)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--inner", type=int, default=None, help="perturbations per lambda in band mode")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train_gen)
    return ap


def _apply_config(ap: argparse.ArgumentParser, argv):
    """Parse ``argv``; values from ``--config`` act as defaults that flags override."""
    args = ap.parse_args(argv)
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
        cfg = cfg.get("config", cfg)
        ap.subcommands[args.command].set_defaults(**{k: v for k, v in cfg.items() if k not in ("command", "func")})
        args = ap.parse_args(argv)
    return args


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = _apply_config(ap, argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (InputError, DomainError, DegenerateDomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except _NUMERIC_ERRORS as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
