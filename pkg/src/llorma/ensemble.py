"""Nadaraya-Watson combination of local models into one predictor."""
from __future__ import annotations

import logging
import math
from dataclasses import astuple, dataclass, fields
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed

from .data import ObservedMatrix, RatingScale
from .exceptions import (
    ConfigError,
    EmptyInputError,
    EmptyNeighborhoodError,
    InsufficientEntriesError,
    ShapeError,
)
from .factor import FactorPair, TrainConfig
from .kernels import DistanceModel, KernelConfig, anchor_weight_vectors
from .local import Anchor, LocalModel, anchor_order, anchor_seed, train_local

logger = logging.getLogger(__name__)

OK, UNSEEN, EMPTY = 0, 1, 2


def _seen(mask, n):
    if mask is None:
        return np.ones(n, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (n,):
        raise ShapeError(f"seen mask of shape {mask.shape}, expected ({n},)")
    return mask


class EnsembleModel:
    """Kernel-weighted average of local low-rank models.

    Prediction at ``s = (row, col)`` falls back in this order: the scale's
    default rating when the row or column had no training entries, the
    global ``fallback`` model when no anchor has kernel mass at ``s``, and
    otherwise the normalized kernel-weighted average of the local models'
    raw predictions, clamped to the scale.
    """

    def __init__(
        self,
        locals: Sequence[LocalModel],
        dm: DistanceModel,
        kcfg: KernelConfig,
        fallback: FactorPair,
        scale: RatingScale,
        row_seen=None,
        col_seen=None,
        lam: float = math.nan,
    ):
        self.locals = list(locals)
        if not self.locals:
            raise ConfigError("an ensemble needs at least one local model")
        for lm in self.locals:
            if lm.factors.shape != fallback.shape:
                raise ShapeError(f"local model {lm.anchor} has shape {lm.factors.shape}, fallback {fallback.shape}")
        if (dm.n_rows, dm.n_cols) != fallback.shape:
            raise ShapeError("distance model and fallback dimensions differ")
        self.dm = dm
        self.kcfg = kcfg
        self.fallback = fallback
        self.scale = scale
        self.lam = lam
        self.row_seen = _seen(row_seen, fallback.n_rows)
        self.col_seen = _seen(col_seen, fallback.n_cols)
        weights = [anchor_weight_vectors(lm.anchor, dm, kcfg) for lm in self.locals]
        self._row_w = np.array([w[0] for w in weights])
        self._col_w = np.array([w[1] for w in weights])

    @classmethod
    def from_training(cls, locals, dm, kcfg, fallback, train: ObservedMatrix, lam=math.nan):
        return cls(locals, dm, kcfg, fallback, train.scale,
                   row_seen=train.row_counts() > 0, col_seen=train.col_counts() > 0, lam=lam)

    @property
    def q(self) -> int:
        return len(self.locals)

    @property
    def rank(self) -> int:
        return self.locals[0].factors.rank

    @property
    def shape(self):
        return self.fallback.shape

    def kernel_values(self, rows, cols) -> np.ndarray:
        """``K_h(s_i, s)`` for every anchor ``i`` (axis 0) and query (axis 1)."""
        return self._row_w[:, rows] * self._col_w[:, cols]

    def local_raw(self, rows, cols) -> np.ndarray:
        return np.array([lm.factors.raw(rows, cols) for lm in self.locals])

    def predict_with_causes(self, rows, cols):
        """Vectorized prediction; also returns a fallback code per query."""
        rows = np.asarray(rows, dtype=np.int64).reshape(-1)
        cols = np.asarray(cols, dtype=np.int64).reshape(-1)
        n_rows, n_cols = self.shape
        in_range = (rows >= 0) & (rows < n_rows) & (cols >= 0) & (cols < n_cols)
        known = in_range.copy()
        known[in_range] = self.row_seen[rows[in_range]] & self.col_seen[cols[in_range]]

        out = np.full(len(rows), self.scale.default, dtype=float)
        cause = np.full(len(rows), UNSEEN, dtype=np.int8)
        idx = np.flatnonzero(known)
        if len(idx):
            r, c = rows[idx], cols[idx]
            K = self.kernel_values(r, c)
            mass = K.sum(axis=0)
            has_mass = mass > 0
            raw = np.empty(len(idx))
            raw[~has_mass] = self.fallback.raw(r[~has_mass], c[~has_mass])
            hm = np.flatnonzero(has_mass)
            if len(hm):
                P = self.local_raw(r[hm], c[hm])
                raw[hm] = np.sum(K[:, hm] * P, axis=0) / mass[hm]
            out[idx] = self.scale.clip(raw)
            cause[idx] = np.where(has_mass, OK, EMPTY)
        return out, cause

    def predict(self, rows, cols) -> np.ndarray:
        return self.predict_with_causes(rows, cols)[0]

    def __call__(self, rows, cols):
        return self.predict(rows, cols)


def predict(model: EnsembleModel, s) -> float:
    """Prediction at a single index pair ``s = (row, col)``."""
    out, _ = model.predict_with_causes([s[0]], [s[1]])
    return float(out[0])


def nw_weights(model: EnsembleModel, s) -> np.ndarray:
    """Normalized kernel weights of the ``q`` anchors at ``s``."""
    r, c = int(s[0]), int(s[1])
    if not (0 <= r < model.shape[0] and 0 <= c < model.shape[1]):
        raise IndexError(f"index pair {s} outside {model.shape}")
    k = model.kernel_values(np.array([r]), np.array([c]))[:, 0]
    total = k.sum()
    if total <= 0:
        raise EmptyNeighborhoodError(f"no anchor has kernel mass at {tuple(s)}")
    return k / total


@dataclass
class Metrics:
    q: int
    rank: int
    h1: float
    h2: float
    lam: float
    rmse: float
    coverage: float
    fallback_unseen: int
    fallback_empty: int

    CSV_HEADER = "q,rank,h1,h2,lambda,rmse,coverage,fallback_unseen,fallback_empty"

    def to_csv_row(self) -> str:
        return ",".join(repr(v) if isinstance(v, float) else str(v) for v in astuple(self))

    @classmethod
    def from_csv_row(cls, line: str) -> Metrics:
        parts = line.strip().split(",")
        kinds = [f.type for f in fields(cls)]
        return cls(*(int(p) if k in (int, "int") else float(p) for p, k in zip(parts, kinds)))


def _metrics(pred, cause, test, q, rank, h1, h2, lam) -> Metrics:
    n = test.nnz
    return Metrics(
        q=q, rank=rank, h1=h1, h2=h2, lam=lam,
        rmse=float(np.sqrt(np.mean((pred - test.values) ** 2))),
        coverage=float(np.count_nonzero(cause == OK) / n),
        fallback_unseen=int(np.count_nonzero(cause == UNSEEN)),
        fallback_empty=int(np.count_nonzero(cause == EMPTY)),
    )


def evaluate(model: EnsembleModel, test: ObservedMatrix) -> Metrics:
    if test.nnz == 0:
        raise EmptyInputError("test set is empty")
    pred, cause = model.predict_with_causes(test.rows, test.cols)
    return _metrics(pred, cause, test, model.q, model.rank,
                    model.kcfg.h1, model.kcfg.h2, model.lam)


def evaluate_global(model: FactorPair, test: ObservedMatrix, scale: RatingScale,
                    row_seen=None, col_seen=None, lam: float = math.nan) -> Metrics:
    """Metrics for a single global model; unseen rows/columns get the default rating."""
    if test.nnz == 0:
        raise EmptyInputError("test set is empty")
    row_seen = _seen(row_seen, model.n_rows)
    col_seen = _seen(col_seen, model.n_cols)
    known = row_seen[test.rows] & col_seen[test.cols]
    pred = np.where(known, model.predict(test.rows, test.cols, scale), scale.default)
    cause = np.where(known, OK, UNSEEN)
    return _metrics(pred, cause, test, 0, model.rank, math.nan, math.nan, lam)


def fit_ensemble(
    train: ObservedMatrix,
    fallback: FactorPair,
    dm: DistanceModel,
    kcfg: KernelConfig,
    tcfg: TrainConfig,
    q: int,
    seed=0,
    n_jobs: int | None = 1,
    fit_local=None,
    cache: dict | None = None,
) -> tuple[EnsembleModel, int]:
    """Sample ``q`` anchors, fit a local model at each and assemble the ensemble.

    Anchors whose neighborhood turns out empty are replaced by the next
    candidate in the seeded order. Returns the ensemble and the number of
    replaced anchors. ``fit_local(anchor, tcfg)`` overrides the local solver;
    ``cache`` maps candidate positions to already-fitted local models.
    """
    if q < 1:
        raise ConfigError(f"number of anchors must be >= 1, got {q}")
    if q > train.nnz:
        raise InsufficientEntriesError(f"cannot draw {q} anchors from {train.nnz} observed entries")
    if fit_local is None:
        def fit_local(anchor, cfg):
            return train_local(train, anchor, dm, kcfg, cfg)
    cache = {} if cache is None else cache
    order = anchor_order(train, seed)

    def attempt(pos):
        if pos not in cache:
            k = order[pos]
            anchor = Anchor(int(train.rows[k]), int(train.cols[k]))
            try:
                cache[pos] = fit_local(anchor, tcfg.with_seed(anchor_seed(tcfg.seed, pos)))
            except EmptyNeighborhoodError:
                cache[pos] = None
        return cache[pos]

    models: list[LocalModel] = []
    replaced = 0
    pos = 0
    while len(models) < q:
        need = q - len(models)
        batch = range(pos, min(pos + need, train.nnz))
        if len(batch) == 0:
            raise EmptyNeighborhoodError(f"only {len(models)} of {q} anchors have non-empty neighborhoods")
        fitted = Parallel(n_jobs=n_jobs, prefer="threads")(delayed(attempt)(p) for p in batch)
        for p, lm in zip(batch, fitted):
            if lm is None:
                replaced += 1
                k = order[p]
                logger.warning("anchor (%d, %d) has an empty neighborhood; resampling",
                               train.rows[k], train.cols[k])
            else:
                models.append(lm)
        pos = batch.stop
    return EnsembleModel.from_training(models, dm, kcfg, fallback, train, lam=tcfg.lam), replaced
