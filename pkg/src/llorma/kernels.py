"""Arccos distance and compact-support smoothing kernels over row/column pairs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, ShapeError

KERNELS = ("epanechnikov", "uniform")


def _norms(a):
    # explicit row sums keep single-vector and batched results bit-identical
    return np.sqrt(np.sum(a * a, axis=-1))


def arccos_distance(x, y) -> float:
    """Angle between ``x`` and ``y`` in ``[0, pi]``; ``pi`` if either is zero."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise ShapeError(f"vectors of different shapes {x.shape} and {y.shape}")
    return float(arccos_distances(x[None, :], y)[0])


def arccos_distances(features, ref) -> np.ndarray:
    """Distance from every row of ``features`` to the vector ``ref``."""
    features = np.asarray(features, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if features.ndim != 2 or features.shape[1] != ref.shape[-1]:
        raise ShapeError(f"features {features.shape} incompatible with vector {ref.shape}")
    norms = _norms(features)
    nref = _norms(ref)
    out = np.full(len(features), np.pi)
    ok = norms > 0
    if nref > 0:
        cos = np.sum(features[ok] * ref, axis=1) / (norms[ok] * nref)
        out[ok] = np.arccos(np.clip(cos, -1.0, 1.0))
    return out


def epanechnikov(d, h: float, normalized: bool = False):
    """``3/4 (1 - d^2)`` for ``d < h``, zero otherwise.

    The bandwidth only sets the support. With ``normalized=True`` the
    parabola is rescaled to ``3/4 (1 - (d/h)^2)`` instead.
    """
    d = np.asarray(d, dtype=float)
    t = d / h if normalized else d
    out = np.where(d < h, 0.75 * (1.0 - t * t), 0.0)
    return float(out) if out.ndim == 0 else out


def uniform(d, h: float):
    d = np.asarray(d, dtype=float)
    out = np.where(d < h, 1.0, 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class KernelConfig:
    h1: float = 0.8
    h2: float = 0.8
    kind: str = "epanechnikov"
    normalized: bool = False

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise ConfigError(f"kernel must be one of {KERNELS}, got {self.kind!r}")
        if not (self.h1 > 0 and self.h2 > 0):
            raise ConfigError(f"bandwidths must be positive, got h1={self.h1}, h2={self.h2}")
        if self.kind == "epanechnikov" and not self.normalized and max(self.h1, self.h2) > 1.0:
            # 3/4 (1 - d^2) turns negative for 1 < d < h
            raise ConfigError("un-normalized Epanechnikov kernel needs h1, h2 <= 1")

    def kernel(self, d, h):
        if self.kind == "uniform":
            return uniform(d, h)
        return epanechnikov(d, h, self.normalized)


class DistanceModel:
    """Per-row and per-column feature vectors the arccos distance is computed on."""

    def __init__(self, row_features, col_features):
        self.row_features = np.array(row_features, dtype=float, ndmin=2)
        self.col_features = np.array(col_features, dtype=float, ndmin=2)
        for f in (self.row_features, self.col_features):
            if not np.all(np.isfinite(f)):
                raise ValueError("distance features must be finite")
            f.flags.writeable = False
        self.zero_rows = np.flatnonzero(_norms(self.row_features) == 0)
        self.zero_cols = np.flatnonzero(_norms(self.col_features) == 0)

    @classmethod
    def from_factors(cls, factors) -> DistanceModel:
        return cls(factors.U, factors.V)

    @property
    def n_rows(self) -> int:
        return len(self.row_features)

    @property
    def n_cols(self) -> int:
        return len(self.col_features)

    def row_distances(self, a: int) -> np.ndarray:
        return arccos_distances(self.row_features, self.row_features[a])

    def col_distances(self, b: int) -> np.ndarray:
        return arccos_distances(self.col_features, self.col_features[b])


def _check_pair(dm: DistanceModel, s):
    a, b = int(s[0]), int(s[1])
    if not (0 <= a < dm.n_rows and 0 <= b < dm.n_cols):
        raise IndexError(f"index pair {s} outside {dm.n_rows}x{dm.n_cols}")
    return a, b


def product_kernel(s, t, dm: DistanceModel, cfg: KernelConfig) -> float:
    """``K'_{h1}(row_s, row_t) * K''_{h2}(col_s, col_t)``."""
    a, b = _check_pair(dm, s)
    c, d = _check_pair(dm, t)
    kr = cfg.kernel(arccos_distance(dm.row_features[a], dm.row_features[c]), cfg.h1)
    kc = cfg.kernel(arccos_distance(dm.col_features[b], dm.col_features[d]), cfg.h2)
    return float(kr * kc)


def anchor_weight_vectors(anchor, dm: DistanceModel, cfg: KernelConfig):
    """Row and column kernel weights around ``anchor``.

    The dense weight matrix ``K^(a,b)`` is ``np.outer(row_weights, col_weights)``.
    """
    a, b = _check_pair(dm, anchor)
    row_w = np.asarray(cfg.kernel(dm.row_distances(a), cfg.h1), dtype=float)
    col_w = np.asarray(cfg.kernel(dm.col_distances(b), cfg.h2), dtype=float)
    return row_w, col_w
