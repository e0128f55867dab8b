"""Supervised losses and their curvature envelopes.

Two losses are supported: squared error for linear regression and the
logistic negative log-likelihood with labels in {-1, +1}.  The
curvature bounds (extreme eigenvalues of the Hessian envelope) feed the
VI diagnostics and the inner solver's default step size.
"""
from __future__ import annotations

from enum import Enum

import numpy as np

from .model import Array, UserDataset


class LossKind(str, Enum):
    LINEAR = "linear"
    LOGISTIC = "logistic"


def _as_kind(kind: LossKind | str) -> LossKind:
    try:
        return LossKind(kind)
    except ValueError:
        raise ValueError(f"unsupported loss kind {kind!r}") from None


def _check_w(w: Array, data: UserDataset) -> Array:
    w = np.asarray(w, dtype=float)
    if w.shape != (data.dim,):
        raise ValueError("weight vector does not match feature dimension")
    if not np.isfinite(w).all():
        raise ValueError("weight vector contains non-finite values")
    return w


def loss_value(kind: LossKind | str, w: Array, data: UserDataset) -> float:
    """Loss of weight vector ``w`` on one user's data.

    Linear: 0.5 * ||X w - y||^2.  Logistic: sum_i ln(1 + exp(-y_i x_i' w)).
    Both are non-negative.
    """
    kind = _as_kind(kind)
    w = _check_w(w, data)
    X, y = data.features, data.labels
    if kind is LossKind.LINEAR:
        r = X @ w - y
        return float(0.5 * (r @ r))
    margins = y * (X @ w)
    return float(np.logaddexp(0.0, -margins).sum())


def loss_gradient(kind: LossKind | str, w: Array, data: UserDataset) -> Array:
    """Gradient of loss_value with respect to ``w``."""
    kind = _as_kind(kind)
    w = _check_w(w, data)
    X, y = data.features, data.labels
    if kind is LossKind.LINEAR:
        return X.T @ (X @ w - y)
    margins = y * (X @ w)
    # sigmoid(-m) = exp(-logaddexp(0, m)), stable for large |m|
    s = np.exp(-np.logaddexp(0.0, margins))
    return -(X.T @ (y * s))


def curvature_bounds(kind: LossKind | str, data: UserDataset) -> tuple[float, float]:
    """Envelope (alpha_min, alpha_max) on the loss Hessian spectrum.

    Linear: the extreme eigenvalues of X'X.  Logistic: the Hessian is
    X' D X with diagonal 0 < D <= 1/4, so the envelope is
    (0, lambda_max(X'X) / 4).  alpha_min is clamped at zero since both
    Hessians are positive semidefinite.
    """
    kind = _as_kind(kind)
    gram = data.features.T @ data.features
    eigs = np.linalg.eigvalsh(gram)
    lo = max(0.0, float(eigs[0]))
    hi = max(0.0, float(eigs[-1]))
    if kind is LossKind.LINEAR:
        return lo, hi
    return 0.0, hi / 4.0
