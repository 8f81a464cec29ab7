"""Synthetic matrices that are low-rank locally but not globally."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import UNBOUNDED_SCALE, ObservedMatrix, RatingScale


@dataclass
class LocalLowRankMatrix:
    dense: np.ndarray
    row_cluster: np.ndarray
    col_cluster: np.ndarray
    # model_of[a, b] is the ground-truth model governing block (a, b)
    model_of: np.ndarray
    models: list


def make_local_low_rank(n_rows=200, n_cols=200, n_models=4, n_clusters=3, rank=2,
                        spread=0.15, seed=0) -> LocalLowRankMatrix:
    """Blend of ``n_models`` rank-``rank`` matrices over latent clusters.

    Rows and columns are split evenly into ``n_clusters`` clusters. Each
    ground-truth model ``m`` has factors whose first column is constant per
    cluster and whose remaining columns are Gaussian with scale ``spread``,
    so rows of one cluster point in nearly the same latent direction. The
    blend weight of model ``m`` at ``(i, j)`` is the indicator that the
    block of ``(row_cluster[i], col_cluster[j])`` belongs to ``m``, with
    block ``(a, b)`` assigned to model ``(a + b) % n_models``. The result has
    rank up to ``n_models * rank`` globally but rank ``rank`` on every block.
    """
    if rank < 2:
        raise ValueError("rank must be >= 2 (one cluster column plus spread)")
    rng = np.random.default_rng(seed)
    row_cluster = np.arange(n_rows) % n_clusters
    col_cluster = np.arange(n_cols) % n_clusters
    rng.shuffle(row_cluster)
    rng.shuffle(col_cluster)
    row_level = rng.standard_normal((n_models, n_clusters))
    col_level = rng.standard_normal((n_models, n_clusters))

    models = []
    for m in range(n_models):
        U = np.c_[row_level[m][row_cluster], spread * rng.standard_normal((n_rows, rank - 1))]
        V = np.c_[col_level[m][col_cluster], spread * rng.standard_normal((n_cols, rank - 1))]
        models.append((U, V))

    blocks = np.add.outer(np.arange(n_clusters), np.arange(n_clusters)) % n_models
    owner = blocks[row_cluster[:, None], col_cluster[None, :]]
    dense = np.zeros((n_rows, n_cols))
    for m, (U, V) in enumerate(models):
        dense = np.where(owner == m, U @ V.T, dense)
    return LocalLowRankMatrix(dense, row_cluster, col_cluster, blocks, models)


def observe(dense, fraction, seed=0, scale: RatingScale = UNBOUNDED_SCALE):
    """Reveal a random ``fraction`` of cells; returns ``(observed, hidden)``."""
    dense = np.asarray(dense, dtype=float)
    mask = np.random.default_rng(seed).random(dense.shape) < fraction
    observed = ObservedMatrix.from_dense(dense, mask, scale=scale)
    hidden = ObservedMatrix.from_dense(dense, ~mask, scale=scale)
    return observed, hidden
