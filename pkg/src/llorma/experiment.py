"""Rank x anchor-count sweeps comparing global and local models."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field, fields
from typing import NamedTuple, Sequence

from .data import FORMATS, MOVIELENS_SCALE, ObservedMatrix, RatingScale, read_ratings, split_train_test
from .ensemble import evaluate, evaluate_global, fit_ensemble
from .exceptions import ConfigError, InsufficientEntriesError
from .factor import SOLVERS, FactorPair, TrainConfig, train_global
from .kernels import DistanceModel, KernelConfig
from .local import LocalModel
from .nuclear import SvtConfig, svt_complete, svt_local, truncate

logger = logging.getLogger(__name__)

EXPERIMENT_SOLVERS = SOLVERS + ("svt",)
SERIES_HEADER = "kind,rank,q,rmse,coverage,fallback_unseen,fallback_empty"


@dataclass(frozen=True)
class ExperimentConfig:
    input: str | None = None
    format: str = "movielens-dat"
    test_fraction: float = 0.1
    ranks: tuple = (5,)
    anchors: tuple = (50,)
    h1: float = 0.8
    h2: float = 0.8
    lam: float = 0.01
    solver: str = "als"
    distance_rank: int = 10
    seed: int = 0
    out: str | None = None
    kernel: str = "epanechnikov"
    normalized_kernel: bool = False
    learning_rate: float = 0.01
    max_epochs: int = 100
    tolerance: float = 1e-4
    n_jobs: int = 1
    scale: RatingScale = field(default=MOVIELENS_SCALE)

    def __post_init__(self):
        object.__setattr__(self, "ranks", tuple(int(r) for r in self.ranks))
        object.__setattr__(self, "anchors", tuple(int(q) for q in self.anchors))
        if not self.ranks or not self.anchors:
            raise ConfigError("rank and anchor lists must be non-empty")
        if min(self.ranks) < 1:
            raise ConfigError(f"ranks must be >= 1, got {list(self.ranks)}")
        if min(self.anchors) < 1:
            raise ConfigError(f"anchor counts must be >= 1, got {list(self.anchors)}")
        if int(self.distance_rank) < 1:
            raise ConfigError(f"distance rank must be >= 1, got {self.distance_rank}")
        if self.solver not in EXPERIMENT_SOLVERS:
            raise ConfigError(f"solver must be one of {EXPERIMENT_SOLVERS}, got {self.solver!r}")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}, got {self.format!r}")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError(f"test fraction must lie in (0, 1), got {self.test_fraction}")
        # validates the kernel settings early
        self.kernel_config()

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]

    def kernel_config(self) -> KernelConfig:
        return KernelConfig(self.h1, self.h2, self.kernel, self.normalized_kernel)

    def train_config(self, rank: int) -> TrainConfig:
        return TrainConfig(
            rank=rank, lam=self.lam, learning_rate=self.learning_rate,
            max_epochs=self.max_epochs, tolerance=self.tolerance, seed=self.seed,
            solver="als" if self.solver == "svt" else self.solver,
        )


class SeriesRow(NamedTuple):
    kind: str
    rank: int
    q: int
    rmse: float
    coverage: float
    fallback_unseen: int
    fallback_empty: int

    def sort_key(self):
        return (self.kind, self.rank, self.q)


def _row(kind, m) -> SeriesRow:
    return SeriesRow(kind, m.rank, m.q, m.rmse, m.coverage, m.fallback_unseen, m.fallback_empty)


def _clamp_rank(rank, train):
    return min(rank, train.n_rows, train.n_cols)


def sweep(train: ObservedMatrix, test: ObservedMatrix, config: ExperimentConfig) -> list[SeriesRow]:
    """Fit and evaluate every global rank and every (rank, q) ensemble.

    The distance features come from one rank-``distance_rank`` global fit on
    ``train`` that is shared by all sweep points and also serves as the
    fallback for queries without kernel mass.
    """
    if max(config.anchors) > train.nnz:
        raise InsufficientEntriesError(f"cannot draw {max(config.anchors)} anchors from {train.nnz} training entries")
    kcfg = config.kernel_config()
    row_seen = train.row_counts() > 0
    col_seen = train.col_counts() > 0
    use_svt = config.solver == "svt"
    completion = svt_complete(train).X if use_svt else None

    def global_model(rank):
        rank = _clamp_rank(rank, train)
        if use_svt:
            return FactorPair(*truncate(completion, rank))
        return train_global(train, config.train_config(rank))

    t0 = time.perf_counter()
    d_rank = _clamp_rank(config.distance_rank, train)
    distance_global = global_model(d_rank)
    dm = DistanceModel.from_factors(distance_global)
    logger.info("distance model (rank %d) fitted in %.2fs", d_rank, time.perf_counter() - t0)

    rows = []
    for rank in sorted(set(config.ranks)):
        t0 = time.perf_counter()
        g = distance_global if _clamp_rank(rank, train) == d_rank else global_model(rank)
        rows.append(_row("global", evaluate_global(g, test, train.scale, row_seen, col_seen, config.lam)))
        logger.info("global rank %d: rmse %.4f (%.2fs)", rank, rows[-1].rmse, time.perf_counter() - t0)

        tcfg = config.train_config(_clamp_rank(rank, train))
        fit_local = None
        if use_svt:
            def fit_local(anchor, cfg, rank=tcfg.rank):
                X = svt_local(train, anchor, dm, kcfg, SvtConfig()).X
                return LocalModel(anchor, FactorPair(*truncate(X, rank)))
        cache = {}
        for q in sorted(set(config.anchors)):
            t0 = time.perf_counter()
            ens, replaced = fit_ensemble(train, distance_global, dm, kcfg, tcfg, q,
                                         seed=config.seed, n_jobs=config.n_jobs,
                                         fit_local=fit_local, cache=cache)
            m = evaluate(ens, test)
            rows.append(_row("local", m))
            logger.info("local rank %d q %d: rmse %.4f coverage %.3f, %d anchors replaced (%.2fs)",
                        rank, q, m.rmse, m.coverage, replaced, time.perf_counter() - t0)
    return sorted(rows, key=SeriesRow.sort_key)


def run_experiment(config: ExperimentConfig) -> list[SeriesRow]:
    """Read, split, sweep, and write the series to ``config.out`` if set."""
    if config.input is None:
        raise ConfigError("no input file given")
    data = read_ratings(config.input, config.format, config.scale)
    logger.info("read %d ratings (%d x %d)", data.nnz, data.n_rows, data.n_cols)
    train, test = split_train_test(data, config.test_fraction, config.seed)
    rows = sweep(train, test, config)
    if config.out is not None:
        emit_series(rows, config.out)
    return rows


def format_series(rows: Sequence[SeriesRow]) -> str:
    if not rows:
        raise ValueError("no rows to write")
    lines = [SERIES_HEADER]
    for r in sorted(rows, key=SeriesRow.sort_key):
        lines.append(",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in r))
    return "\n".join(lines) + "\n"


def emit_series(rows: Sequence[SeriesRow], path) -> None:
    text = format_series(rows)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def parse_series(text: str) -> list[SeriesRow]:
    reader = csv.reader(text.splitlines())
    header = next(reader, None)
    if header is None or ",".join(header) != SERIES_HEADER:
        raise ValueError(f"unexpected series header {header!r}")
    types = (str, int, int, float, float, int, int)
    return [SeriesRow(*(t(v) for t, v in zip(types, rec))) for rec in reader if rec]


def read_series(path) -> list[SeriesRow]:
    with open(path, encoding="utf-8") as fh:
        return parse_series(fh.read())
