"""Command line entry point: ``llorma experiment``, ``llorma svt`` and ``llorma synth``.

Exit codes: 0 success, 1 data error, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .data import FORMATS, RatingScale, read_ratings
from .exceptions import ConfigError, DataError, NumericalError, ShapeError
from .experiment import EXPERIMENT_SOLVERS, ExperimentConfig, format_series, run_experiment
from .nuclear import SvtConfig, svt_complete
from .synthetic import make_local_low_rank

logger = logging.getLogger("llorma")

EXIT_OK, EXIT_DATA, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


def _int_list(text):
    try:
        values = [int(v) for v in str(text).replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("list must not be empty")
    return values


def _bool(text):
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


# flag name -> (ExperimentConfig field, converter, help)
EXPERIMENT_OPTIONS = {
    "input": ("input", str, "ratings file"),
    "format": ("format", str, f"one of {', '.join(FORMATS)}"),
    "test-fraction": ("test_fraction", float, "held-out share of ratings (default 0.1)"),
    "ranks": ("ranks", _int_list, "comma-separated model ranks"),
    "anchors": ("anchors", _int_list, "comma-separated anchor counts"),
    "h1": ("h1", float, "row bandwidth (default 0.8)"),
    "h2": ("h2", float, "column bandwidth (default 0.8)"),
    "lambda": ("lam", float, "L2 penalty (default 0.01)"),
    "solver": ("solver", str, f"one of {', '.join(EXPERIMENT_SOLVERS)}"),
    "distance-rank": ("distance_rank", int, "rank of the distance-feature fit (default 10)"),
    "seed": ("seed", int, "master seed (default 0)"),
    "out": ("out", str, "output CSV path"),
    "kernel": ("kernel", str, "epanechnikov or uniform"),
    "normalized-kernel": ("normalized_kernel", _bool, "scale distances by the bandwidth"),
    "learning-rate": ("learning_rate", float, "SGD step size"),
    "max-epochs": ("max_epochs", int, "epoch cap per fit (default 100)"),
    "tolerance": ("tolerance", float, "relative loss change to stop at (default 1e-4)"),
    "jobs": ("n_jobs", int, "threads for local fits; output does not depend on it"),
    "rating-min": (None, float, "lowest rating (default 1)"),
    "rating-max": (None, float, "highest rating (default 5)"),
    "default-rating": (None, float, "prediction for unseen rows/columns (default 3)"),
}


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.lstrip("-").replace("_", "-")
            if key not in EXPERIMENT_OPTIONS:
                raise ConfigError(f"{path}:{lineno}: unknown setting {key!r}")
            try:
                values[key] = EXPERIMENT_OPTIONS[key][1](value)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return values


def build_experiment_config(args) -> ExperimentConfig:
    settings = read_config_file(args.config) if args.config else {}
    for name in EXPERIMENT_OPTIONS:
        value = getattr(args, name.replace("-", "_"))
        if value is not None:
            settings[name] = value
    scale = RatingScale(
        settings.pop("rating-min", 1.0), settings.pop("rating-max", 5.0),
        settings.pop("default-rating", 3.0),
    )
    kwargs = {EXPERIMENT_OPTIONS[k][0]: v for k, v in settings.items()}
    if not kwargs.get("input"):
        raise ConfigError("an input file is required (--input or 'input' in the config file)")
    return ExperimentConfig(scale=scale, **kwargs)


def _cmd_experiment(args) -> int:
    config = build_experiment_config(args)
    rows = run_experiment(config)
    if config.out is None:
        sys.stdout.write(format_series(rows))
    return EXIT_OK


def _cmd_svt(args) -> int:
    scale = RatingScale(args.rating_min, args.rating_max, args.default_rating)
    observed = read_ratings(args.input, args.format, scale)
    cfg = SvtConfig(tau=args.tau, alpha=args.alpha, step=args.step, max_iters=args.max_iters,
                    tolerance=args.tol)
    result = svt_complete(observed, cfg)
    if not np.all(np.isfinite(result.X)):
        raise NumericalError("completion is not finite")
    row_ids = observed.row_ids or [str(i) for i in range(observed.n_rows)]
    col_ids = observed.col_ids or [str(j) for j in range(observed.n_cols)]
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(["row"] + list(col_ids)) + "\n")
        for rid, values in zip(row_ids, result.X):
            fh.write(",".join([rid] + [repr(float(v)) for v in values]) + "\n")
    report_path = args.report or args.out + ".report.jsonl"
    with open(report_path, "w", encoding="utf-8") as fh:
        for i, (tau, objective) in enumerate(result.history, 1):
            fh.write(json.dumps({"iteration": i, "tau": tau, "objective": objective}) + "\n")
        fh.write(json.dumps({"summary": True, **result.report()}) + "\n")
    logger.info("svt: %d iterations, residual %.3g, nuclear norm %.6g", result.iterations,
                result.residual, result.nuclear_norm)
    return EXIT_OK


def _cmd_synth(args) -> int:
    data = make_local_low_rank(args.rows, args.cols, n_models=args.models, n_clusters=args.clusters,
                               rank=args.rank, spread=args.spread, seed=args.seed)
    rng = np.random.default_rng(args.seed)
    mask = rng.random(data.dense.shape) < args.fraction
    rows, cols = np.nonzero(mask)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        for r, c in zip(rows, cols):
            fh.write(f"{r},{c},{float(data.dense[r, c])!r}\n")
    lo, hi = float(data.dense.min()), float(data.dense.max())
    logger.info("wrote %d entries; values span [%.4g, %.4g]", len(rows), lo, hi)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0, help="more logging on stderr")
    parser = argparse.ArgumentParser(prog="llorma", description="Local low-rank matrix approximation.")
    sub = parser.add_subparsers(dest="command", required=True)

    exp = sub.add_parser("experiment", parents=[common], help="sweep ranks and anchor counts; write an RMSE series")
    exp.add_argument("--config", help="file of 'key = value' lines using the flag names")
    for name, (_, conv, text) in EXPERIMENT_OPTIONS.items():
        exp.add_argument(f"--{name}", type=conv, default=None, help=text)
    exp.set_defaults(func=_cmd_experiment)

    svt = sub.add_parser("svt", parents=[common], help="dense nuclear-norm completion of a small ratings file")
    svt.add_argument("--input", required=True)
    svt.add_argument("--format", default="movielens-dat", choices=FORMATS)
    svt.add_argument("--out", required=True, help="completed matrix CSV")
    svt.add_argument("--report", help="JSON-lines report (default: <out>.report.jsonl)")
    svt.add_argument("--tau", type=float)
    svt.add_argument("--alpha", type=float)
    svt.add_argument("--step", type=float, default=1.0)
    svt.add_argument("--max-iters", type=int, default=500)
    svt.add_argument("--tol", type=float, default=1e-6)
    svt.add_argument("--rating-min", type=float, default=1.0)
    svt.add_argument("--rating-max", type=float, default=5.0)
    svt.add_argument("--default-rating", type=float, default=3.0)
    svt.set_defaults(func=_cmd_svt)

    syn = sub.add_parser("synth", parents=[common], help="write a locally low-rank synthetic ratings CSV")
    syn.add_argument("--out", required=True)
    syn.add_argument("--rows", type=int, default=200)
    syn.add_argument("--cols", type=int, default=200)
    syn.add_argument("--models", type=int, default=4)
    syn.add_argument("--clusters", type=int, default=3)
    syn.add_argument("--rank", type=int, default=2)
    syn.add_argument("--spread", type=float, default=0.15)
    syn.add_argument("--fraction", type=float, default=0.2)
    syn.add_argument("--seed", type=int, default=0)
    syn.set_defaults(func=_cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DataError, ShapeError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_DATA
    except (ConfigError, ValueError) as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        logger.error("%s", exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
