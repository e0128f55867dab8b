"""Adversary-protection surrogates added to each user's objective.

The worst-case inner maximization over a bounded perturbation region is
replaced by a tractable upper surrogate: a varsigma-weighted sum of the
OTHER users' squared weight norms plus a constant offset delta.  The
surrogate never depends on the user's own weight vector, so it shifts
objective values and couples the diagnostics, but it cannot move any
local minimizer.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .losses import LossKind, loss_value
from .model import Array, UserDataset


@dataclass(frozen=True)
class NoProtection:
    """Protection disabled; the surrogate is identically zero."""


@dataclass(frozen=True)
class L2Protection:
    """Surrogate varsigma[n] * sum_{m != n} ||w_m||^2 + delta[n]."""

    varsigma: tuple[float, ...]
    delta: tuple[float, ...]

    def __post_init__(self) -> None:
        vs = tuple(float(v) for v in self.varsigma)
        de = tuple(float(d) for d in self.delta)
        if len(vs) < 1 or len(vs) != len(de):
            raise ValueError("varsigma and delta must hold one entry per user")
        if any(not np.isfinite(v) or v < 0 for v in vs):
            raise ValueError("varsigma entries must be finite and non-negative")
        if any(not np.isfinite(d) for d in de):
            raise ValueError("delta entries must be finite")
        object.__setattr__(self, "varsigma", vs)
        object.__setattr__(self, "delta", de)


ProtectionSpec = Union[NoProtection, L2Protection]


def protection_value(spec: ProtectionSpec, n: int, all_weights: Array) -> float:
    """Surrogate value for user n given the full weight matrix (N, d)."""
    if isinstance(spec, NoProtection):
        return 0.0
    if isinstance(spec, L2Protection):
        W = np.asarray(all_weights, dtype=float)
        if W.ndim != 2:
            raise ValueError("all_weights must have shape (n_users, dim)")
        if not 0 <= n < W.shape[0]:
            raise ValueError("user index out of range")
        sq = np.einsum("md,md->m", W, W)
        # sum only the other rows: add-then-subtract would let w_n leak
        # into the rounding of a value that must not depend on it
        others = sq[np.arange(W.shape[0]) != n]
        return float(spec.varsigma[n] * others.sum() + spec.delta[n])
    raise ValueError(f"unsupported protection {spec!r}")


def protection_cross_coupling(spec: ProtectionSpec, n: int) -> float:
    """Magnitude of the second derivative of user n's surrogate in any
    other user's weight coordinate: 2 * varsigma[n] (0 when disabled).

    This is the off-diagonal coupling bound consumed by the VI
    diagnostics.
    """
    if isinstance(spec, NoProtection):
        return 0.0
    if isinstance(spec, L2Protection):
        return 2.0 * spec.varsigma[n]
    raise ValueError(f"unsupported protection {spec!r}")


def robust_objective(
    loss_kind: LossKind | str,
    spec: ProtectionSpec,
    n: int,
    w_n: Array,
    data_n: UserDataset,
    all_weights: Array,
) -> float:
    """User n's protected objective: loss at w_n plus the surrogate.

    The surrogate is evaluated on ``all_weights`` with the other users'
    rows frozen; the w_n argument alone decides the loss term.
    """
    return loss_value(loss_kind, w_n, data_n) + protection_value(spec, n, all_weights)
