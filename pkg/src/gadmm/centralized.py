"""Centralized reference solution and distance-to-reference metrics.

The centralized problem pools every user's data and minimizes the plain
summed loss without protection terms or consensus coupling.  The
distributed runs are scored against it with two relative deltas.
"""
from __future__ import annotations

import numpy as np

from .losses import LossKind, curvature_bounds, loss_gradient, loss_value
from .model import Array, SystemState, UserDataset

_RIDGE = 1e-10
_NORM_FLOOR = 1e-12


class NotConvergedError(RuntimeError):
    """Iterative centralized solve missed its tolerance; carries the best iterate."""

    def __init__(self, best: Array, grad_norm: float):
        super().__init__(
            f"centralized solve stopped with gradient norm {grad_norm:.3e}"
        )
        self.best = best
        self.grad_norm = grad_norm


def _pooled(datasets: list[UserDataset]) -> UserDataset:
    if not datasets:
        raise ValueError("need at least one dataset")
    X = np.vstack([d.features for d in datasets])
    y = np.concatenate([d.labels for d in datasets])
    return UserDataset(X, y)


def centralized_objective(
    kind: LossKind | str, w: Array, datasets: list[UserDataset]
) -> float:
    """Pooled loss sum_n V_n(w); no protection terms."""
    return float(sum(loss_value(kind, w, d) for d in datasets))


def solve_centralized(
    kind: LossKind | str,
    datasets: list[UserDataset],
    tolerance: float = 1e-8,
    max_iters: int = 200_000,
) -> Array:
    """Minimizer of the pooled loss.

    Linear: normal equations on the stacked system, ridge-stabilized by
    1e-10 when singular.  Logistic: gradient descent with step
    1 / lipschitz down to ``tolerance`` on the gradient norm; raises
    NotConvergedError (carrying the best iterate) past ``max_iters``.
    """
    kind = LossKind(kind)
    pooled = _pooled(datasets)
    X, y = pooled.features, pooled.labels

    if kind is LossKind.LINEAR:
        gram = X.T @ X
        rhs = X.T @ y
        try:
            w = np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError:
            w = None
        if w is None or not np.isfinite(w).all() or np.linalg.norm(
            gram @ w - rhs
        ) > 1e-6 * (1.0 + np.linalg.norm(rhs)):
            w = np.linalg.solve(gram + _RIDGE * np.eye(gram.shape[0]), rhs)
        return w

    _, lip = curvature_bounds(kind, pooled)
    step = 1.0 / max(lip, _NORM_FLOOR)
    w = np.zeros(pooled.dim)
    best, best_norm = w, np.inf
    for _ in range(max_iters):
        g = loss_gradient(kind, w, pooled)
        g_norm = float(np.linalg.norm(g))
        if g_norm < best_norm:
            best, best_norm = w, g_norm
        if g_norm <= tolerance:
            return w
        w = w - step * g
    raise NotConvergedError(best, best_norm)


def compute_delta(
    state: SystemState,
    w_star: Array,
    kind: LossKind | str,
    datasets: list[UserDataset],
) -> tuple[float, float]:
    """Relative distance of a distributed state to the reference w_star.

    delta_param = mean_n ||w_n - w*|| / max(||w*||, 1e-12);
    delta_objective = (F(w_bar) - F(w*)) / max(|F(w*)|, 1e-12) with
    w_bar the average user weight and F the pooled loss.
    """
    w_star = np.asarray(w_star, dtype=float)
    if w_star.shape != (state.dim,):
        raise ValueError("w_star does not match the state dimension")
    ref = max(float(np.linalg.norm(w_star)), _NORM_FLOOR)
    delta_param = float(
        np.mean(np.linalg.norm(state.weights - w_star[None, :], axis=1)) / ref
    )
    w_bar = state.weights.mean(axis=0)
    f_star = centralized_objective(kind, w_star, datasets)
    f_bar = centralized_objective(kind, w_bar, datasets)
    delta_objective = (f_bar - f_star) / max(abs(f_star), _NORM_FLOOR)
    return delta_param, float(delta_objective)
