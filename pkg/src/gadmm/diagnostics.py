"""Variational-inequality diagnostics.

The per-user gradient game behind the distributed run is summarized by
the condition matrix Upsilon: diagonal entries are each user's smallest
loss curvature (optionally plus one for the proximal term), off-diagonal
entries are the negated protection cross-couplings.  A P-matrix verdict
on Upsilon certifies a unique solution regime.  Empirical monotonicity
and co-coercivity estimates and KKT residuals complete the picture.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Callable

import numpy as np

from .constraints import (
    ClassicalConsensus,
    ConstraintSpec,
    GroupConsensus,
    SoftNormConsensus,
    eval_inequality,
    grad_inequality,
    stacked_equality,
)
from .losses import LossKind, curvature_bounds, loss_gradient
from .model import Array, SystemState, UserDataset
from .protection import ProtectionSpec, protection_cross_coupling

MAX_P_MATRIX_SIZE = 20


class InsufficientSamplesError(RuntimeError):
    """Every sampled pair was degenerate; no ratio could be formed."""


@dataclass(frozen=True, eq=False)
class UpsilonMatrix:
    """Condition matrix with per-entry provenance strings."""

    entries: Array
    provenance: tuple[tuple[str, ...], ...]

    def __post_init__(self) -> None:
        M = np.asarray(self.entries, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("entries must be square")
        off = M[~np.eye(M.shape[0], dtype=bool)]
        if off.size and off.max() > 0:
            raise ValueError("off-diagonal entries must be non-positive")


@dataclass(frozen=True)
class KKTResidual:
    """First-order optimality residuals of a joint state; all non-negative."""

    stationarity_norm: float
    equality_norm: float
    complementarity_gap: float
    dual_feasibility_violation: float
    primal_inequality_violation: float

    def __post_init__(self) -> None:
        for name in (
            "stationarity_norm",
            "equality_norm",
            "complementarity_gap",
            "dual_feasibility_violation",
            "primal_inequality_violation",
        ):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and non-negative")


def build_upsilon(
    loss_kind: LossKind | str,
    datasets: list[UserDataset],
    protection: ProtectionSpec,
    include_proximal: bool = False,
) -> UpsilonMatrix:
    """Condition matrix of the protected gradient game.

    entries[n][n] = alpha_min of user n's loss curvature, plus one when
    the proximal term is part of the diagnosed map;
    entries[n][m] = -(2 varsigma_n) for m != n.
    """
    n_users = len(datasets)
    if n_users < 1:
        raise ValueError("need at least one dataset")
    M = np.zeros((n_users, n_users))
    prov: list[tuple[str, ...]] = []
    for n in range(n_users):
        row = []
        alpha_min, _ = curvature_bounds(loss_kind, datasets[n])
        diag = alpha_min + (1.0 if include_proximal else 0.0)
        coupling = protection_cross_coupling(protection, n)
        for m in range(n_users):
            if m == n:
                M[n, m] = diag
                row.append(
                    f"alpha_min[user {n}]"
                    + (" + 1 (proximal)" if include_proximal else "")
                )
            else:
                M[n, m] = -coupling + 0.0  # avoid -0.0 when uncoupled
                row.append(f"-2*varsigma[user {n}]")
        prov.append(tuple(row))
    return UpsilonMatrix(entries=M, provenance=tuple(prov))


def is_p_matrix(matrix: Array, max_size: int = MAX_P_MATRIX_SIZE) -> bool:
    """Exhaustive P-matrix test: every principal minor strictly positive.

    Enumerates all 2^N - 1 principal submatrices, smallest first, with
    early exit on the first non-positive minor.  Sizes above
    ``max_size`` (default 20) are refused since the check is
    exponential.
    """
    M = np.asarray(matrix, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
        raise ValueError("matrix must be square and non-empty")
    n = M.shape[0]
    if n > max_size:
        raise ValueError(f"matrix size {n} exceeds the exhaustive limit {max_size}")
    if not np.isfinite(M).all():
        raise ValueError("matrix contains non-finite values")
    for size in range(1, n + 1):
        for subset in combinations(range(n), size):
            if size == 1:
                minor = M[subset[0], subset[0]]
            elif size == 2:
                i, j = subset
                minor = M[i, i] * M[j, j] - M[i, j] * M[j, i]
            else:
                minor = float(np.linalg.det(M[np.ix_(subset, subset)]))
            if not minor > 0.0:
                return False
    return True


def _sample_box(
    rng: np.random.Generator, lo: Array, hi: Array, count: int
) -> Array:
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    if lo.shape != hi.shape or (hi <= lo).any():
        raise ValueError("domain box must have lo < hi per coordinate")
    return rng.uniform(lo, hi, size=(count, lo.shape[0]))


def estimate_strong_monotonicity(
    F_evaluator: Callable[[Array], Array],
    sample_count: int,
    domain_box: tuple[Array, Array],
    seed: int = 0,
) -> float:
    """Empirical strong-monotonicity constant of a map on a box.

    Minimum of (x - x')'(F(x) - F(x')) / ||x - x'||^2 over all sampled
    pairs; deterministic given the seed.  A lower bound witness only,
    never a certificate.
    """
    if sample_count < 2:
        raise ValueError("sample_count must be at least 2")
    rng = np.random.default_rng(seed)
    X = _sample_box(rng, domain_box[0], domain_box[1], sample_count)
    F = np.stack([np.asarray(F_evaluator(x), dtype=float) for x in X])
    dx = X[:, None, :] - X[None, :, :]
    df = F[:, None, :] - F[None, :, :]
    num = np.einsum("ijd,ijd->ij", dx, df)
    den = np.einsum("ijd,ijd->ij", dx, dx)
    iu = np.triu_indices(sample_count, k=1)
    num, den = num[iu], den[iu]
    keep = den > 0.0
    if not keep.any():
        raise InsufficientSamplesError("all sampled pairs were identical")
    return float((num[keep] / den[keep]).min())


def estimate_cocoercivity(
    phi_evaluator: Callable[[Array], Array],
    sample_count: int,
    domain_box: tuple[Array, Array],
    seed: int = 0,
) -> float:
    """Empirical co-coercivity constant of a map on a box.

    Minimum of (x - x')'(phi(x) - phi(x')) / ||phi(x) - phi(x')||^2
    over sampled pairs with distinct outputs; deterministic given the
    seed.
    """
    if sample_count < 2:
        raise ValueError("sample_count must be at least 2")
    rng = np.random.default_rng(seed)
    X = _sample_box(rng, domain_box[0], domain_box[1], sample_count)
    F = np.stack([np.asarray(phi_evaluator(x), dtype=float) for x in X])
    dx = X[:, None, :] - X[None, :, :]
    df = F[:, None, :] - F[None, :, :]
    num = np.einsum("ijd,ijd->ij", dx, df)
    den = np.einsum("ijd,ijd->ij", df, df)
    iu = np.triu_indices(sample_count, k=1)
    num, den = num[iu], den[iu]
    keep = den > 0.0
    if not keep.any():
        raise InsufficientSamplesError("all sampled pairs had equal outputs")
    return float((num[keep] / den[keep]).min())


def kkt_residual(
    state: SystemState,
    loss_kind: LossKind | str,
    datasets: list[UserDataset],
    constraint: ConstraintSpec,
    protection: ProtectionSpec,
) -> KKTResidual:
    """First-order residuals of the joint state.

    Stationarity stacks each user's own-gradient block (loss gradient
    plus multiplier-weighted constraint gradients; the protection
    surrogate has no own-weight gradient) and the consensus block.
    Equality rows are counted once each (group edges are deduplicated).
    """
    n_users = state.n_users
    if len(datasets) != n_users:
        raise ValueError("datasets must hold one entry per user")
    blocks = []
    z_block = np.zeros(state.dim)
    ineqs = []
    for n in range(n_users):
        w_n = state.weights[n]
        g = loss_gradient(loss_kind, w_n, datasets[n])
        if isinstance(constraint, ClassicalConsensus):
            g = g + float(state.mu[n])
            z_block -= float(state.mu[n]) * np.ones(state.dim)
        elif isinstance(constraint, GroupConsensus):
            g = g + float(state.mu[n]) * len(constraint.adjacency[n])
        elif isinstance(constraint, SoftNormConsensus):
            gw, gz = grad_inequality(constraint, n, w_n, state.z)
            g = g + float(state.lam[n]) * gw
            z_block += float(state.lam[n]) * gz
        blocks.append(g)
        ineqs.append(eval_inequality(constraint, n, w_n, state.z))
    blocks.append(z_block)
    stationarity = float(np.linalg.norm(np.concatenate(blocks)))

    eq = stacked_equality(constraint, state.weights, state.z)
    equality = float(np.linalg.norm(eq)) if eq.size else 0.0
    ineqs_arr = np.asarray(ineqs)
    complementarity = float(np.abs(state.lam * ineqs_arr).max())
    dual_violation = float(max(0.0, -(state.lam.min())))
    primal_violation = float(max(0.0, ineqs_arr.max()))
    return KKTResidual(
        stationarity_norm=stationarity,
        equality_norm=equality,
        complementarity_gap=complementarity,
        dual_feasibility_violation=dual_violation,
        primal_inequality_violation=primal_violation,
    )
