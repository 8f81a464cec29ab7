"""scikit-learn compatible estimators.

All estimators take ``X`` as an ``(n_samples, 2)`` integer array of
``(row, col)`` index pairs and ``y`` as the observed ratings, so they work
with ``cross_val_score``, ``GridSearchCV`` and ``Pipeline``. Prediction for a
row or column with no training ratings (including indices beyond the
fitted dimensions) returns ``default_rating``.
"""
from __future__ import annotations

import numbers

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted, column_or_1d

from .data import UNBOUNDED_SCALE, ObservedMatrix, RatingScale
from .ensemble import evaluate, fit_ensemble
from .factor import TrainConfig, train_global
from .kernels import DistanceModel, KernelConfig
from .nuclear import SvtConfig, svt_complete


def check_index_pairs(X) -> np.ndarray:
    """Validate ``X`` as non-negative integer ``(row, col)`` pairs."""
    X = check_array(X, dtype=None, ensure_2d=True, ensure_all_finite=True)
    if X.shape[1] != 2:
        raise ValueError(f"X must have exactly 2 columns (row, col), got {X.shape[1]}")
    if X.dtype.kind == "f":
        if not np.all(X == np.round(X)):
            raise ValueError("X must hold integer indices")
    elif X.dtype.kind not in "iu":
        raise ValueError(f"X must be numeric, got dtype {X.dtype}")
    X = X.astype(np.int64)
    if (X < 0).any():
        raise ValueError("indices in X must be non-negative")
    return X


def check_ratings(X, y):
    X = check_index_pairs(X)
    y = column_or_1d(y, warn=True).astype(float)
    check_consistent_length(X, y)
    if not np.all(np.isfinite(y)):
        raise ValueError("y must be finite")
    return X, y


def resolve_seed(random_state) -> int:
    if isinstance(random_state, numbers.Integral):
        return int(random_state)
    return int(check_random_state(random_state).randint(np.iinfo(np.int32).max))


class _RatingEstimator(RegressorMixin, BaseEstimator):
    def _scale(self):
        return RatingScale(self.rating_min, self.rating_max, self.default_rating)

    def _train_config(self, rank=None):
        return TrainConfig(
            rank=self.rank if rank is None else rank, lam=self.lam,
            learning_rate=self.learning_rate, max_epochs=self.max_epochs,
            tolerance=self.tol, seed=resolve_seed(self.random_state), solver=self.solver,
        )

    def _observed(self, X, y) -> ObservedMatrix:
        X, y = check_ratings(X, y)
        n_rows = self.n_rows if self.n_rows is not None else int(X[:, 0].max()) + 1 if len(X) else 0
        n_cols = self.n_cols if self.n_cols is not None else int(X[:, 1].max()) + 1 if len(X) else 0
        return ObservedMatrix(X[:, 0], X[:, 1], y, n_rows, n_cols, scale=self._scale())

    def _set_seen(self, train: ObservedMatrix):
        self.scale_ = train.scale
        self.n_rows_, self.n_cols_ = train.shape
        self.row_seen_ = train.row_counts() > 0
        self.col_seen_ = train.col_counts() > 0
        self.n_features_in_ = 2

    def _known(self, X):
        rows, cols = X[:, 0], X[:, 1]
        known = (rows < self.n_rows_) & (cols < self.n_cols_)
        known[known] &= self.row_seen_[rows[known]] & self.col_seen_[cols[known]]
        return known

    def fit_matrix(self, train: ObservedMatrix):
        """Fit directly on an :class:`ObservedMatrix` (its scale is used as-is)."""
        raise NotImplementedError

    def fit(self, X, y):
        return self.fit_matrix(self._observed(X, y))

    def _predict_known(self, rows, cols):
        raise NotImplementedError

    def predict(self, X):
        check_is_fitted(self, "scale_")
        X = check_index_pairs(X)
        out = np.full(len(X), self.scale_.default, dtype=float)
        known = self._known(X)
        if known.any():
            out[known] = self._predict_known(X[known, 0], X[known, 1])
        return out

    def rmse(self, X, y) -> float:
        X, y = check_ratings(X, y)
        return float(np.sqrt(np.mean((self.predict(X) - y) ** 2)))


class GlobalLRMA(_RatingEstimator):
    """Regularized low-rank factorization fit to observed ratings.

    Parameters
    ----------
    rank : int
        Inner dimension of ``U @ V.T``.
    lam : float
        L2 penalty on both factors.
    solver : {"als", "sgd"}
    learning_rate : float
        Step size, used by ``solver="sgd"`` only.
    max_epochs, tol : int, float
        Stop after ``max_epochs`` or when the relative loss change drops
        below ``tol``.
    random_state : int, RandomState or None
    rating_min, rating_max, default_rating : float
        Predictions are clamped to ``[rating_min, rating_max]``.
    n_rows, n_cols : int or None
        Matrix dimensions; inferred from the largest index in ``X`` if None.

    Attributes
    ----------
    factors_ : FactorPair
    loss_history_ : list of float
    """

    def __init__(self, rank=5, lam=0.01, solver="als", learning_rate=0.01, max_epochs=100,
                 tol=1e-4, random_state=0, rating_min=1.0, rating_max=5.0,
                 default_rating=3.0, n_rows=None, n_cols=None):
        self.rank = rank
        self.lam = lam
        self.solver = solver
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.tol = tol
        self.random_state = random_state
        self.rating_min = rating_min
        self.rating_max = rating_max
        self.default_rating = default_rating
        self.n_rows = n_rows
        self.n_cols = n_cols

    def fit_matrix(self, train):
        self.factors_ = train_global(train, self._train_config())
        self.loss_history_ = list(self.factors_.loss_history)
        self._set_seen(train)
        return self

    def _predict_known(self, rows, cols):
        return self.factors_.predict(rows, cols, self.scale_)

    def transform(self, X):
        """Concatenated row and column latent vectors for each pair in ``X``."""
        check_is_fitted(self, "factors_")
        X = check_index_pairs(X)
        if (X[:, 0] >= self.n_rows_).any() or (X[:, 1] >= self.n_cols_).any():
            raise IndexError("index pair outside the fitted matrix")
        return np.hstack([self.factors_.U[X[:, 0]], self.factors_.V[X[:, 1]]])


class LocalLRMA(_RatingEstimator):
    """Kernel-smoothed ensemble of local low-rank models.

    A rank-``distance_rank`` global factorization provides the row and column
    features for the arccos distance. ``n_anchors`` observed entries are
    drawn at random, a kernel-weighted factorization of rank ``rank`` is fit
    around each, and predictions are the Nadaraya-Watson average of the
    local models. Queries with zero kernel mass fall back to the
    distance-feature global model.

    Parameters
    ----------
    rank : int
        Rank of every local model.
    n_anchors : int
    h1, h2 : float
        Row and column bandwidths (radians).
    kernel : {"epanechnikov", "uniform"}
    normalized_kernel : bool
        Use ``3/4 (1 - (d/h)^2)`` instead of ``3/4 (1 - d^2)``.
    distance_rank : int
    n_jobs : int or None
        Threads used to fit local models; results do not depend on it.

    The remaining parameters are those of :class:`GlobalLRMA` and apply to
    both the distance-feature fit and the local fits.

    Attributes
    ----------
    ensemble_ : EnsembleModel
    distance_model_ : DistanceModel
    global_ : FactorPair
        The distance-feature factorization, also used as fallback.
    anchors_ : list of Anchor
    n_replaced_anchors_ : int
    """

    def __init__(self, rank=5, n_anchors=50, h1=0.8, h2=0.8, kernel="epanechnikov",
                 normalized_kernel=False, lam=0.01, distance_rank=10, solver="als",
                 learning_rate=0.01, max_epochs=100, tol=1e-4, random_state=0, n_jobs=1,
                 rating_min=1.0, rating_max=5.0, default_rating=3.0, n_rows=None, n_cols=None):
        self.rank = rank
        self.n_anchors = n_anchors
        self.h1 = h1
        self.h2 = h2
        self.kernel = kernel
        self.normalized_kernel = normalized_kernel
        self.lam = lam
        self.distance_rank = distance_rank
        self.solver = solver
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.tol = tol
        self.random_state = random_state
        self.n_jobs = n_jobs
        self.rating_min = rating_min
        self.rating_max = rating_max
        self.default_rating = default_rating
        self.n_rows = n_rows
        self.n_cols = n_cols

    def fit_matrix(self, train):
        tcfg = self._train_config()
        kcfg = KernelConfig(self.h1, self.h2, self.kernel, self.normalized_kernel)
        d_rank = min(self.distance_rank, train.n_rows, train.n_cols)
        self.global_ = train_global(train, self._train_config(rank=d_rank))
        self.distance_model_ = DistanceModel.from_factors(self.global_)
        self.ensemble_, self.n_replaced_anchors_ = fit_ensemble(
            train, self.global_, self.distance_model_, kcfg, tcfg,
            q=self.n_anchors, seed=tcfg.seed, n_jobs=self.n_jobs,
        )
        self.anchors_ = [lm.anchor for lm in self.ensemble_.locals]
        self._set_seen(train)
        return self

    def _predict_known(self, rows, cols):
        return self.ensemble_.predict(rows, cols)

    def evaluate(self, X, y):
        """RMSE plus coverage and fallback counts on ``(X, y)``."""
        check_is_fitted(self, "ensemble_")
        X, y = check_ratings(X, y)
        if (X[:, 0] >= self.n_rows_).any() or (X[:, 1] >= self.n_cols_).any():
            raise ValueError("index pairs outside the fitted matrix; use predict() for those")
        test = ObservedMatrix(X[:, 0], X[:, 1], y, self.n_rows_, self.n_cols_, scale=UNBOUNDED_SCALE)
        return evaluate(self.ensemble_, test)


class SVTCompleter(_RatingEstimator):
    """Nuclear-norm matrix completion on a dense, size-capped matrix.

    Attributes
    ----------
    completion_ : ndarray of shape (n_rows, n_cols)
        Unclamped completed matrix.
    result_ : SvtResult
    """

    def __init__(self, tau=None, alpha=None, step=1.0, max_iters=500, tol=1e-6,
                 continuation=0.8, rating_min=1.0, rating_max=5.0, default_rating=3.0,
                 n_rows=None, n_cols=None):
        self.tau = tau
        self.alpha = alpha
        self.step = step
        self.max_iters = max_iters
        self.tol = tol
        self.continuation = continuation
        self.rating_min = rating_min
        self.rating_max = rating_max
        self.default_rating = default_rating
        self.n_rows = n_rows
        self.n_cols = n_cols

    def fit_matrix(self, train):
        cfg = SvtConfig(tau=self.tau, alpha=self.alpha, step=self.step, max_iters=self.max_iters,
                        tolerance=self.tol, continuation=self.continuation)
        self.result_ = svt_complete(train, cfg)
        self.completion_ = self.result_.X
        self._set_seen(train)
        return self

    def _predict_known(self, rows, cols):
        return self.scale_.clip(self.completion_[rows, cols])

    def transform(self, X=None):
        """The completed matrix clamped to the rating scale."""
        check_is_fitted(self, "completion_")
        return self.scale_.clip(self.completion_)


__all__ = [
    "GlobalLRMA",
    "LocalLRMA",
    "SVTCompleter",
    "check_index_pairs",
    "check_ratings",
]
