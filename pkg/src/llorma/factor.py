"""Regularized incomplete-SVD factorization ``M ~ U V^T`` fit on observed entries.

The objective minimized here is

    sum_{(i,j) observed} w_ij * ([U V^T]_ij - M_ij)^2 + lam * (||U||_F^2 + ||V||_F^2)

with ``w_ij = 1`` for the global model. The same solver fits the
kernel-weighted local models in :mod:`llorma.local`.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .data import ObservedMatrix, RatingScale
from .exceptions import (
    ConfigError,
    DivergenceError,
    EmptyInputError,
    ShapeError,
)

logger = logging.getLogger(__name__)

SOLVERS = ("als", "sgd")
INIT_SCALE = 0.01


@dataclass(frozen=True)
class TrainConfig:
    rank: int = 5
    lam: float = 0.01
    learning_rate: float = 0.01
    max_epochs: int = 100
    tolerance: float = 1e-4
    seed: int = 0
    solver: str = "als"

    def __post_init__(self):
        if int(self.rank) < 1:
            raise ConfigError(f"rank must be >= 1, got {self.rank}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning rate must be > 0, got {self.learning_rate}")
        if int(self.max_epochs) < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.tolerance <= 0:
            raise ConfigError(f"tolerance must be > 0, got {self.tolerance}")
        if self.solver not in SOLVERS:
            raise ConfigError(f"solver must be one of {SOLVERS}, got {self.solver!r}")

    def with_seed(self, seed) -> TrainConfig:
        return replace(self, seed=seed)


@dataclass(eq=False)
class FactorPair:
    """Rank-``r`` factors of one low-rank matrix ``U @ V.T``."""

    U: np.ndarray
    V: np.ndarray
    loss_history: list = field(default_factory=list, repr=False)
    converged: bool = True

    def __post_init__(self):
        self.U = np.array(self.U, dtype=float, ndmin=2)
        self.V = np.array(self.V, dtype=float, ndmin=2)
        if self.U.shape[1] != self.V.shape[1]:
            raise ShapeError(f"U has rank {self.U.shape[1]} but V has rank {self.V.shape[1]}")
        if self.U.shape[1] < 1:
            raise ShapeError("rank must be >= 1")
        if not (np.all(np.isfinite(self.U)) and np.all(np.isfinite(self.V))):
            raise ValueError("factors must be finite")
        self.U.flags.writeable = False
        self.V.flags.writeable = False

    @property
    def rank(self) -> int:
        return self.U.shape[1]

    @property
    def n_rows(self) -> int:
        return self.U.shape[0]

    @property
    def n_cols(self) -> int:
        return self.V.shape[0]

    @property
    def shape(self):
        return self.n_rows, self.n_cols

    def raw(self, rows, cols) -> np.ndarray:
        """Unclamped ``[U V^T]`` at the given index arrays."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        return np.einsum("ij,ij->i", self.U[rows], self.V[cols])

    def predict(self, rows, cols, scale: RatingScale | None = None) -> np.ndarray:
        out = self.raw(rows, cols)
        return out if scale is None else scale.clip(out)

    def dense(self) -> np.ndarray:
        return self.U @ self.V.T

    def same_as(self, other: FactorPair) -> bool:
        """Bitwise equality of the factors."""
        return np.array_equal(self.U, other.U) and np.array_equal(self.V, other.V)


def predict_entry(model: FactorPair, row: int, col: int, scale: RatingScale) -> float:
    if not (0 <= row < model.n_rows and 0 <= col < model.n_cols):
        raise IndexError(f"({row}, {col}) outside a {model.n_rows}x{model.n_cols} model")
    return float(np.clip(model.U[row] @ model.V[col], scale.min, scale.max))


# -- objective -----------------------------------------------------------------


def _entries(train):
    if isinstance(train, ObservedMatrix):
        return train.rows, train.cols, train.values
    rows, cols, values = train
    return np.asarray(rows), np.asarray(cols), np.asarray(values, dtype=float)


def weighted_loss_and_gradient(U, V, train, weights, lam):
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    rows, cols, vals = _entries(train)
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if U.ndim != 2 or V.ndim != 2 or U.shape[1] != V.shape[1]:
        raise ShapeError(f"incompatible factor shapes {U.shape} and {V.shape}")
    if isinstance(train, ObservedMatrix) and (U.shape[0] != train.n_rows or V.shape[0] != train.n_cols):
        raise ShapeError(f"factors {U.shape[0]}x{V.shape[0]} do not match matrix {train.shape}")
    if len(weights) != len(vals):
        raise ShapeError(f"{len(weights)} weights for {len(vals)} observed entries")
    if len(rows) and (rows.max() >= U.shape[0] or cols.max() >= V.shape[0]):
        raise ShapeError("observed entry outside the factor dimensions")

    resid = np.einsum("ij,ij->i", U[rows], V[cols]) - vals
    wr = weights * resid
    loss = float(np.dot(wr, resid) + lam * (np.sum(U * U) + np.sum(V * V)))
    grad_U = 2.0 * lam * U
    grad_V = 2.0 * lam * V
    np.add.at(grad_U, rows, 2.0 * wr[:, None] * V[cols])
    np.add.at(grad_V, cols, 2.0 * wr[:, None] * U[rows])
    return loss, grad_U, grad_V


def objective_and_gradient(U, V, train, lam):
    """Loss and exact gradients of the unweighted regularized objective."""
    _, _, vals = _entries(train)
    return weighted_loss_and_gradient(U, V, train, np.ones(len(vals)), lam)


# -- alternating least squares ---------------------------------------------------


def _half_step(this_idx, other_idx, vals, w, other, n_this, lam, selector):
    """Exact minimization over every row of one factor given the other."""
    r = other.shape[1]
    Vo = other[other_idx]
    wV = w[:, None] * Vo
    gram = selector @ (wV[:, :, None] * Vo[:, None, :]).reshape(-1, r * r)
    rhs = selector @ (wV * vals[:, None])
    out = np.zeros((n_this, r))
    active = np.flatnonzero(np.bincount(this_idx, minlength=n_this))
    if len(active) == 0:
        return out
    A = gram[active].reshape(-1, r, r)
    b = rhs[active]
    if lam > 0:
        A = A + lam * np.eye(r)
        out[active] = np.linalg.solve(A, b[:, :, None])[:, :, 0]
    else:
        # minimum-norm solution; rows may be rank deficient without a ridge
        for k, i in enumerate(active):
            out[i] = np.linalg.lstsq(A[k], b[k], rcond=None)[0]
    return out


def _init_factors(n_rows, n_cols, rank, seed):
    rng = np.random.default_rng(seed)
    U = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(n_rows, rank))
    V = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(n_cols, rank))
    return U, V, rng


def _loss(U, V, rows, cols, vals, w, lam):
    resid = np.einsum("ij,ij->i", U[rows], V[cols]) - vals
    return float(np.dot(w * resid, resid) + lam * (np.sum(U * U) + np.sum(V * V)))


def _converged(prev, loss, tol):
    return abs(prev - loss) <= tol * max(abs(prev), 1e-300)


def _als(rows, cols, vals, w, n_rows, n_cols, config):
    m = len(vals)
    U, V, _ = _init_factors(n_rows, n_cols, config.rank, config.seed)
    ones = np.ones(m)
    by_row = sp.csr_matrix((ones, (rows, np.arange(m))), shape=(n_rows, m))
    by_col = sp.csr_matrix((ones, (cols, np.arange(m))), shape=(n_cols, m))
    history = []
    prev = _loss(U, V, rows, cols, vals, w, config.lam)
    converged = False
    for epoch in range(1, config.max_epochs + 1):
        U = _half_step(rows, cols, vals, w, V, n_rows, config.lam, by_row)
        V = _half_step(cols, rows, vals, w, U, n_cols, config.lam, by_col)
        loss = _loss(U, V, rows, cols, vals, w, config.lam)
        if not math.isfinite(loss) or not (np.all(np.isfinite(U)) and np.all(np.isfinite(V))):
            raise DivergenceError(epoch, loss)
        history.append(loss)
        if _converged(prev, loss, config.tolerance):
            converged = True
            break
        prev = loss
    return U, V, history, converged


# -- stochastic gradient descent -------------------------------------------------


def _sgd(rows, cols, vals, w, n_rows, n_cols, config):
    U, V, rng = _init_factors(n_rows, n_cols, config.rank, config.seed)
    # spread the ridge penalty over each row's / column's entries so one
    # epoch of updates sums to the full-batch gradient
    row_share = config.lam / np.maximum(np.bincount(rows, minlength=n_rows), 1)
    col_share = config.lam / np.maximum(np.bincount(cols, minlength=n_cols), 1)
    lr = config.learning_rate
    history = []
    prev = _loss(U, V, rows, cols, vals, w, config.lam)
    converged = False
    for epoch in range(1, config.max_epochs + 1):
        for k in rng.permutation(len(vals)):
            i, j = rows[k], cols[k]
            u = U[i].copy()
            err = w[k] * (u @ V[j] - vals[k])
            U[i] -= lr * 2.0 * (err * V[j] + row_share[i] * u)
            V[j] -= lr * 2.0 * (err * u + col_share[j] * V[j])
        loss = _loss(U, V, rows, cols, vals, w, config.lam)
        if not math.isfinite(loss):
            raise DivergenceError(epoch, loss)
        history.append(loss)
        if _converged(prev, loss, config.tolerance):
            converged = True
            break
        prev = loss
    U[np.bincount(rows, minlength=n_rows) == 0] = 0.0
    V[np.bincount(cols, minlength=n_cols) == 0] = 0.0
    return U, V, history, converged


def fit_weighted(rows, cols, vals, weights, n_rows, n_cols, config: TrainConfig) -> FactorPair:
    """Fit factors to a weighted set of entries.

    Entries with zero weight must already be removed by the caller. Rows and
    columns without entries end up with zero factors.
    """
    if config.rank > min(n_rows, n_cols):
        raise ConfigError(f"rank {config.rank} exceeds min({n_rows}, {n_cols})")
    solver = _als if config.solver == "als" else _sgd
    U, V, history, converged = solver(
        np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64),
        np.asarray(vals, dtype=float), np.asarray(weights, dtype=float),
        n_rows, n_cols, config,
    )
    if not converged:
        logger.debug("stopped after %d epochs without reaching tolerance", config.max_epochs)
    return FactorPair(U, V, loss_history=history, converged=converged)


def train_global(train: ObservedMatrix, config: TrainConfig = TrainConfig()) -> FactorPair:
    if train.nnz == 0:
        raise EmptyInputError("training set is empty")
    return fit_weighted(
        train.rows, train.cols, train.values, np.ones(train.nnz),
        train.n_rows, train.n_cols, config,
    )


def rmse(predictor: Callable, test: ObservedMatrix) -> float:
    """Root mean squared error of ``predictor(rows, cols)`` on ``test``.

    ``predictor`` is vectorized: it receives index arrays and returns an
    array of predictions.
    """
    if test.nnz == 0:
        raise EmptyInputError("test set is empty")
    pred = np.asarray(predictor(test.rows, test.cols), dtype=float)
    return float(np.sqrt(np.mean((pred - test.values) ** 2)))


# -- serialization ---------------------------------------------------------------

_FACTOR_MAGIC = "llorma-factors 1"


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_factors(model: FactorPair, fh, scale: RatingScale) -> None:
    fh.write(_FACTOR_MAGIC + "\n")
    fh.write(f"n_rows {model.n_rows}\nn_cols {model.n_cols}\nrank {model.rank}\n")
    fh.write(f"scale {_fmt(scale.min)} {_fmt(scale.max)} {_fmt(scale.default)}\n")
    for name, mat in (("U", model.U), ("V", model.V)):
        fh.write(name + "\n")
        for row in mat:
            fh.write(" ".join(_fmt(x) for x in row) + "\n")
    fh.write("end\n")


def _expect(lines, key):
    line = next(lines).split()
    if not line or line[0] != key:
        raise ValueError(f"expected {key!r}, got {' '.join(line)!r}")
    return line[1:]


def read_factors(fh) -> tuple[FactorPair, RatingScale]:
    lines = (ln.strip() for ln in fh if ln.strip())
    header = next(lines)
    if header != _FACTOR_MAGIC:
        raise ValueError(f"not a factor file (header {header!r})")
    return _read_factor_body(lines)


def _read_factor_body(lines):
    n_rows = int(_expect(lines, "n_rows")[0])
    n_cols = int(_expect(lines, "n_cols")[0])
    rank = int(_expect(lines, "rank")[0])
    lo, hi, default = (float(x) for x in _expect(lines, "scale"))
    mats = []
    for name, n in (("U", n_rows), ("V", n_cols)):
        _expect(lines, name)
        mat = np.array([[float(x) for x in next(lines).split()] for _ in range(n)], dtype=float)
        mats.append(mat.reshape(n, rank))
    _expect(lines, "end")
    return FactorPair(*mats), RatingScale(lo, hi, default)
