"""Dense nuclear-norm completion, global and kernel-weighted.

Both solvers minimize ``tau * ||X||_* + 1/2 * ||W (.) (X - M)||_F^2`` over
observed cells (``W`` is 1 for the global problem and the anchor's kernel
weights for the local one) with a monotone accelerated proximal-gradient
iteration. ``tau`` is lowered geometrically from ``||W^2 (.) M||_2`` down to
its floor, and the solver stops at the first iterate whose data residual
``||W (.) (X - M)||_F`` is at most ``alpha`` or once the floor stage has
converged. Following this path keeps the returned iterate close to the
smallest-nuclear-norm matrix inside the ``alpha`` residual ball.

Dense SVDs are used throughout, so inputs are capped at ``MAX_DIM`` per side.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import ObservedMatrix
from .exceptions import ConfigError, EmptyNeighborhoodError, SizeError
from .kernels import DistanceModel, KernelConfig, anchor_weight_vectors

MAX_DIM = 1000


@dataclass(frozen=True)
class SvtConfig:
    """Solver settings.

    ``tau`` and ``alpha`` default to ``1e-4`` times ``||W^2 (.) M||_2`` and
    ``||W (.) M||_F`` respectively. ``continuation`` is the per-iteration
    factor applied to the threshold until it reaches ``tau``; 1 disables it.
    """

    tau: float | None = None
    step: float = 1.0
    max_iters: int = 500
    alpha: float | None = None
    tolerance: float = 1e-6
    continuation: float = 0.8
    accelerate: bool = True

    def __post_init__(self):
        if self.tau is not None and not self.tau > 0:
            raise ConfigError(f"tau must be > 0, got {self.tau}")
        if not self.step > 0:
            raise ConfigError(f"step must be > 0, got {self.step}")
        if int(self.max_iters) < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.alpha is not None and not self.alpha >= 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if not self.tolerance > 0:
            raise ConfigError(f"tolerance must be > 0, got {self.tolerance}")
        if not 0 < self.continuation <= 1:
            raise ConfigError(f"continuation factor must lie in (0, 1], got {self.continuation}")


@dataclass
class SvtResult:
    X: np.ndarray
    iterations: int
    residual: float
    nuclear_norm: float
    tau: float
    alpha: float
    converged: bool
    feasible: bool
    history: list = field(default_factory=list, repr=False)

    def report(self) -> dict:
        return {
            "iterations": self.iterations,
            "residual": self.residual,
            "nuclear_norm": self.nuclear_norm,
            "tau": self.tau,
            "alpha": self.alpha,
            "converged": self.converged,
            "feasible": self.feasible,
        }


def _check_size(shape):
    if shape[0] > MAX_DIM or shape[1] > MAX_DIM:
        raise SizeError(f"dense solver limited to {MAX_DIM}x{MAX_DIM}, got {shape[0]}x{shape[1]}")


def nuclear_norm(X) -> float:
    X = np.asarray(X, dtype=float)
    _check_size(X.shape)
    if X.size == 0:
        return 0.0
    return float(np.linalg.svd(X, compute_uv=False).sum())


def shrink(Y, tau: float):
    """Soft-threshold the singular values of ``Y`` by ``tau``.

    Returns the shrunk matrix and its nuclear norm.
    """
    U, s, Vt = np.linalg.svd(Y, full_matrices=False)
    s = np.maximum(s - tau, 0.0)
    return (U * s) @ Vt, float(s.sum())


def _solve(M, W2, cfg: SvtConfig) -> SvtResult:
    W = np.sqrt(W2)
    WM = W * M
    start = float(np.linalg.norm(W2 * M, 2)) if M.size else 0.0
    data_norm = float(np.linalg.norm(WM))
    tau = cfg.tau if cfg.tau is not None else 1e-4 * start
    alpha = cfg.alpha if cfg.alpha is not None else 1e-4 * data_norm

    X = np.zeros_like(M)
    if data_norm <= alpha or start == 0.0:
        return SvtResult(X, 0, data_norm, 0.0, tau, alpha, True, data_norm <= alpha)

    def objective(Z, nn, t):
        R = W * (Z - M)
        return t * nn + 0.5 * float(np.sum(R * R))

    t = max(start, tau) if cfg.continuation < 1 else tau
    F_x = objective(X, 0.0, t)
    nn_x = 0.0
    Y = X
    theta = 1.0
    history = []
    converged = False
    residual = data_norm
    it = 0
    for it in range(1, cfg.max_iters + 1):
        t_new = max(tau, t * cfg.continuation)
        if t_new != t:
            t = t_new
            F_x = objective(X, nn_x, t)
        Z, nn_z = shrink(Y - cfg.step * W2 * (Y - M), cfg.step * t)
        F_z = objective(Z, nn_z, t)
        # keep the better of the new proximal point and the current iterate
        if F_z <= F_x:
            X_new, F_new, nn_new = Z, F_z, nn_z
        else:
            X_new, F_new, nn_new = X, F_x, nn_x
        if cfg.accelerate:
            theta_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * theta * theta))
            Y = X_new + (theta / theta_new) * (Z - X_new) + ((theta - 1.0) / theta_new) * (X_new - X)
            theta = theta_new
        else:
            Y = X_new
        # size of the proximal-gradient step, zero exactly at a fixed point;
        # X itself may not move when the monotone safeguard rejects Z
        change = float(np.linalg.norm(Z - Y)) / max(float(np.linalg.norm(Z)), 1e-300)
        X, F_x, nn_x = X_new, F_new, nn_new
        residual = float(np.linalg.norm(W * (X - M)))
        history.append((t, F_x))
        if not np.isfinite(F_x):
            break
        if residual <= alpha or (t == tau and change < cfg.tolerance):
            converged = True
            break

    return SvtResult(
        X, it, residual, nuclear_norm(X), tau, alpha,
        converged, residual <= alpha, history,
    )


def svt_complete(observed: ObservedMatrix, cfg: SvtConfig = SvtConfig()) -> SvtResult:
    """Complete ``observed`` by nuclear-norm minimization."""
    _check_size(observed.shape)
    return _solve(observed.to_dense(), observed.mask().astype(float), cfg)


def local_weight_matrix(observed: ObservedMatrix, anchor, dm: DistanceModel, kcfg: KernelConfig) -> np.ndarray:
    """Dense ``K^(a,b) (.) mask``: kernel weights on observed cells, 0 elsewhere."""
    row_w, col_w = anchor_weight_vectors(anchor, dm, kcfg)
    return np.outer(row_w, col_w) * observed.mask()


def svt_local(
    observed: ObservedMatrix,
    anchor,
    dm: DistanceModel,
    kcfg: KernelConfig,
    cfg: SvtConfig = SvtConfig(),
) -> SvtResult:
    """Nuclear-norm completion with the data term weighted by the anchor's kernel."""
    _check_size(observed.shape)
    K = local_weight_matrix(observed, anchor, dm, kcfg)
    if not np.any(K > 0):
        raise EmptyNeighborhoodError(f"no observed entry has positive weight around anchor {tuple(anchor)}")
    return _solve(observed.to_dense(), K * K, cfg)


def truncate(X, rank: int):
    """Best rank-``rank`` factors ``(U, V)`` of ``X`` with ``U @ V.T`` the truncated SVD."""
    U, s, Vt = np.linalg.svd(np.asarray(X, dtype=float), full_matrices=False)
    root = np.sqrt(s[:rank])
    return U[:, :rank] * root, Vt[:rank].T * root
