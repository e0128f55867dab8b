"""Per-user proximal subproblem and the consensus update.

Each round, user n minimizes over its own weights inside the box
[-B, B]^d:

    loss_n(w) + protection_n(frozen others)
      + mu_n * sum(g1_n(w, z)) + lam_n * g2_n(w, z)
      + 0.5 * ||w - w_prev||^2

The protection term never depends on w, so it shifts values but not
minimizers.  For the linear loss under the classical or p=2 ball
constraint the subproblem is an unconstrained positive-definite
quadratic and is solved in closed form (falling back to projected
gradient descent if the solution leaves the box); everything else runs
projected gradient descent with halving backtracking.
"""
from __future__ import annotations

import numpy as np

from .config import RunConfig
from .constraints import (
    ClassicalConsensus,
    ConstraintSpec,
    GroupConsensus,
    SoftNormConsensus,
    eval_equality,
    eval_inequality,
    grad_inequality,
)
from .losses import LossKind, curvature_bounds, loss_gradient, loss_value
from .model import Array, SystemState, UserDataset
from .protection import protection_value

_MAX_HALVINGS = 60


class InnerDivergenceError(RuntimeError):
    """The inner solver could not decrease the objective at any step size."""


def _objective_core(
    n: int,
    w: Array,
    state: SystemState,
    w_prev: Array,
    datasets: list[UserDataset],
    config: RunConfig,
) -> float:
    """Subproblem objective without the protection constant.

    The protection term does not depend on w, so the inner solver works
    on this reduced value: line-search comparisons then never see the
    constant, which keeps trajectories bit-identical across protection
    weights.
    """
    w = np.asarray(w, dtype=float)
    w_prev = np.asarray(w_prev, dtype=float)
    value = loss_value(config.loss_kind, w, datasets[n])
    eq = eval_equality(config.constraint, n, w, state.z, state.weights)
    if eq.size:
        value += float(state.mu[n]) * float(eq.sum())
    value += float(state.lam[n]) * eval_inequality(config.constraint, n, w, state.z)
    diff = w - w_prev
    return float(value + 0.5 * (diff @ diff))


def local_objective(
    n: int,
    w: Array,
    state: SystemState,
    w_prev: Array,
    datasets: list[UserDataset],
    config: RunConfig,
) -> float:
    """Value of user n's proximal subproblem objective at w."""
    return _objective_core(n, w, state, w_prev, datasets, config) + protection_value(
        config.protection, n, state.weights
    )


def _local_gradient(
    n: int,
    w: Array,
    state: SystemState,
    w_prev: Array,
    datasets: list[UserDataset],
    config: RunConfig,
) -> Array:
    g = loss_gradient(config.loss_kind, w, datasets[n])
    constraint = config.constraint
    if isinstance(constraint, ClassicalConsensus):
        g = g + float(state.mu[n])
    elif isinstance(constraint, GroupConsensus):
        g = g + float(state.mu[n]) * len(constraint.adjacency[n])
    elif isinstance(constraint, SoftNormConsensus):
        gw, _ = grad_inequality(constraint, n, w, state.z)
        g = g + float(state.lam[n]) * gw
    return g + (w - w_prev)


def _closed_form_applicable(config: RunConfig) -> bool:
    if config.loss_kind is not LossKind.LINEAR:
        return False
    constraint = config.constraint
    return isinstance(constraint, ClassicalConsensus) or (
        isinstance(constraint, SoftNormConsensus) and constraint.p == 2
    )


def _solve_closed_form(
    n: int,
    state: SystemState,
    w_prev: Array,
    datasets: list[UserDataset],
    config: RunConfig,
) -> Array:
    X = datasets[n].features
    gram = X.T @ X
    rhs = X.T @ datasets[n].labels + w_prev
    ridge = 1.0
    if isinstance(config.constraint, ClassicalConsensus):
        rhs = rhs - float(state.mu[n])
    else:  # p=2 ball: quadratic with curvature 2 lam_n towards z
        lam_n = float(state.lam[n])
        ridge += 2.0 * lam_n
        rhs = rhs + 2.0 * lam_n * state.z
    return np.linalg.solve(gram + ridge * np.eye(X.shape[1]), rhs)


def solve_local(
    n: int,
    state: SystemState,
    w_prev: Array,
    datasets: list[UserDataset],
    config: RunConfig,
    method: str = "auto",
) -> Array:
    """Minimize user n's proximal subproblem inside the box.

    method "auto" picks the closed form where applicable (linear loss
    with the classical or p=2 ball constraint, where the subproblem is
    a positive-definite quadratic) and projected gradient descent
    otherwise; "closed_form" and "pgd" force a route.  The output
    always lies inside [-box_bound, box_bound]^d and never increases
    the objective relative to w_prev.
    """
    if method not in ("auto", "pgd", "closed_form"):
        raise ValueError(f"unknown method {method!r}")
    w_prev = np.asarray(w_prev, dtype=float)
    bound = config.inner.box_bound

    if method == "closed_form" and not _closed_form_applicable(config):
        raise ValueError(
            "closed form needs the linear loss with a classical or p=2 ball constraint"
        )
    if method in ("auto", "closed_form") and _closed_form_applicable(config):
        w = _solve_closed_form(n, state, w_prev, datasets, config)
        if np.abs(w).max() <= bound:
            return w
        if method == "closed_form":
            raise ValueError("closed-form solution leaves the box")

    return _solve_pgd(n, state, w_prev, datasets, config)


def _solve_pgd(
    n: int,
    state: SystemState,
    w_prev: Array,
    datasets: list[UserDataset],
    config: RunConfig,
) -> Array:
    inner = config.inner
    bound = inner.box_bound
    if inner.step_size is not None:
        step0 = inner.step_size
    else:
        _, lip = curvature_bounds(config.loss_kind, datasets[n])
        step0 = 1.0 / (lip + 1.0)

    w = np.clip(w_prev, -bound, bound)
    f = _objective_core(n, w, state, w_prev, datasets, config)
    for _ in range(inner.max_iters):
        g = _local_gradient(n, w, state, w_prev, datasets, config)
        if np.linalg.norm(g) <= inner.tolerance:
            break
        eta = step0
        cand = w
        f_cand = f
        accepted = False
        for _ in range(_MAX_HALVINGS):
            cand = np.clip(w - eta * g, -bound, bound)
            f_cand = _objective_core(n, cand, state, w_prev, datasets, config)
            if f_cand <= f + 1e-4 * float(g @ (cand - w)):
                accepted = True
                break
            eta *= 0.5
        if not accepted:
            if f_cand <= f or np.linalg.norm(cand - w) <= 1e-14 * (1.0 + np.linalg.norm(w)):
                w, f = cand, min(f, f_cand)
                break
            raise InnerDivergenceError(
                f"no decreasing step found for user {n} after {_MAX_HALVINGS} halvings"
            )
        if np.linalg.norm(cand - w) == 0.0:
            break
        w, f = cand, f_cand
    return w


def update_z(state: SystemState, constraint: ConstraintSpec) -> Array:
    """Consensus update given the current weights and multipliers.

    Classical: plain average of the user weights.  SoftNorm p=2: the
    exact minimizer (z_prev + 2 sum lam_n w_n) / (1 + 2 sum lam_n) of
    sum_n lam_n ||w_n - z||^2 + 0.5 ||z - z_prev||^2.  SoftNorm p=1:
    the exact coordinate-wise minimizer of the same objective with the
    1-norm, found over the kink candidates.  Group: z is unused and
    returned unchanged.
    """
    W = state.weights
    if isinstance(constraint, ClassicalConsensus):
        return W.mean(axis=0)
    if isinstance(constraint, GroupConsensus):
        return state.z.copy()
    if isinstance(constraint, SoftNormConsensus):
        lam = state.lam
        if constraint.p == 2:
            s = 2.0 * float(lam.sum())
            return (state.z + 2.0 * (lam @ W)) / (1.0 + s)
        return _soft_l1_z(state.z, W, lam)
    raise ValueError(f"unsupported constraint {constraint!r}")


def _soft_l1_z(z_prev: Array, W: Array, lam: Array) -> Array:
    """Coordinate-exact minimizer of sum_n lam_n |w_nj - t| + 0.5 (t - z_j)^2.

    The objective is piecewise quadratic in t with kinks at the w_nj;
    the minimum is either a kink or the stationary point of one piece.
    """
    out = np.empty_like(z_prev)
    n = W.shape[0]
    for j in range(z_prev.shape[0]):
        order = np.argsort(W[:, j])
        kinks = W[order, j]
        lam_sorted = lam[order]
        candidates = [float(t) for t in kinks]
        for k in range(n + 1):
            # piece with kinks[:k] below t and kinks[k:] above it
            signs = np.where(np.arange(n) < k, 1.0, -1.0)
            t = z_prev[j] - float(lam_sorted @ signs)
            lo = -np.inf if k == 0 else kinks[k - 1]
            hi = np.inf if k == n else kinks[k]
            if lo <= t <= hi:
                candidates.append(float(t))
        vals = [
            float(lam @ np.abs(W[:, j] - t)) + 0.5 * (t - z_prev[j]) ** 2
            for t in candidates
        ]
        out[j] = candidates[int(np.argmin(vals))]
    return out
