"""Anchor sampling and kernel-weighted local factor models."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from joblib import Parallel, delayed

from .data import ObservedMatrix, RatingScale
from .exceptions import (
    ConfigError,
    EmptyNeighborhoodError,
    InsufficientEntriesError,
)
from .factor import (
    FactorPair,
    TrainConfig,
    _read_factor_body,
    fit_weighted,
    weighted_loss_and_gradient,
    write_factors,
)
from .kernels import DistanceModel, KernelConfig, anchor_weight_vectors

logger = logging.getLogger(__name__)


class Anchor(NamedTuple):
    row: int
    col: int


@dataclass(eq=False)
class LocalModel:
    anchor: Anchor
    factors: FactorPair


def sample_anchors(train: ObservedMatrix, q: int, seed=0) -> list[Anchor]:
    """Draw ``q`` distinct observed entries uniformly without replacement."""
    if q < 1:
        raise ConfigError(f"number of anchors must be >= 1, got {q}")
    if q > train.nnz:
        raise InsufficientEntriesError(f"cannot draw {q} anchors from {train.nnz} observed entries")
    idx = anchor_order(train, seed)[:q]
    return [Anchor(int(train.rows[k]), int(train.cols[k])) for k in idx]


def anchor_order(train: ObservedMatrix, seed=0) -> np.ndarray:
    """Random order of observed entries; the first ``q`` are the ``q`` anchors.

    Anchor sets for increasing ``q`` are nested, and the entries after the
    first ``q`` serve as replacements for anchors with empty neighborhoods.
    """
    return np.random.default_rng(seed).permutation(train.nnz)


def entry_weights(train: ObservedMatrix, anchor, dm: DistanceModel, kcfg: KernelConfig) -> np.ndarray:
    """Kernel weight of every observed entry with respect to ``anchor``."""
    row_w, col_w = anchor_weight_vectors(anchor, dm, kcfg)
    return row_w[train.rows] * col_w[train.cols]


def weighted_objective_and_gradient(U, V, train, weights, lam):
    """Loss and exact gradients of the kernel-weighted regularized objective.

    ``weights`` holds one weight per observed entry of ``train``, in entry order.
    """
    return weighted_loss_and_gradient(U, V, train, weights, lam)


def train_local(
    train: ObservedMatrix,
    anchor,
    dm: DistanceModel,
    kcfg: KernelConfig,
    tcfg: TrainConfig,
) -> LocalModel:
    anchor = Anchor(int(anchor[0]), int(anchor[1]))
    w = entry_weights(train, anchor, dm, kcfg)
    keep = np.flatnonzero(w > 0)
    if len(keep) == 0:
        raise EmptyNeighborhoodError(f"no observed entry has positive weight around anchor {tuple(anchor)}")
    factors = fit_weighted(
        train.rows[keep], train.cols[keep], train.values[keep], w[keep],
        train.n_rows, train.n_cols, tcfg,
    )
    return LocalModel(anchor, factors)


def anchor_seed(seed, index: int) -> int:
    """Per-anchor seed derived from the master seed and the anchor's position."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def train_local_models(
    train: ObservedMatrix,
    anchors: Sequence,
    dm: DistanceModel,
    kcfg: KernelConfig,
    tcfg: TrainConfig,
    n_jobs: int | None = 1,
) -> list[LocalModel]:
    """Fit one local model per anchor, optionally on a thread pool.

    Each fit gets its own seed derived from ``tcfg.seed`` and the anchor's
    position, so the result does not depend on ``n_jobs``.
    """
    jobs = (
        delayed(train_local)(train, a, dm, kcfg, tcfg.with_seed(anchor_seed(tcfg.seed, i)))
        for i, a in enumerate(anchors)
    )
    return list(Parallel(n_jobs=n_jobs, prefer="threads")(jobs))


# -- serialization ---------------------------------------------------------------

_LOCAL_MAGIC = "llorma-local-models 1"


def write_local_models(models: Sequence[LocalModel], fh, scale: RatingScale) -> None:
    fh.write(f"{_LOCAL_MAGIC}\ncount {len(models)}\n")
    for m in models:
        fh.write(f"anchor {m.anchor.row} {m.anchor.col}\n")
        write_factors(m.factors, fh, scale)


def read_local_models(fh) -> tuple[list[LocalModel], RatingScale | None]:
    lines = (ln.strip() for ln in fh if ln.strip())
    header = next(lines)
    if header != _LOCAL_MAGIC:
        raise ValueError(f"not a local model file (header {header!r})")
    count = int(next(lines).split()[1])
    models, scale = [], None
    for _ in range(count):
        tag, r, c = next(lines).split()
        if tag != "anchor":
            raise ValueError(f"expected anchor record, got {tag!r}")
        if next(lines) != "llorma-factors 1":
            raise ValueError("malformed factor block")
        factors, scale = _read_factor_body(lines)
        models.append(LocalModel(Anchor(int(r), int(c)), factors))
    return models, scale
