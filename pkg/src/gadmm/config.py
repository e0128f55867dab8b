"""Run configuration and initial-state construction."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constraints import ConstraintSpec, GroupConsensus, SoftNormConsensus
from .losses import LossKind
from .model import SystemState
from .multipliers import FixedMultipliers, MultiplierScheme
from .protection import L2Protection, ProtectionSpec


@dataclass(frozen=True)
class InnerSolverConfig:
    """Settings for the box-constrained local subproblem solver.

    step_size None means automatic: 1 / (loss lipschitz + 1).  The box
    bound keeps every iterate inside [-box_bound, box_bound]^d.
    """

    step_size: float | None = None
    tolerance: float = 1e-8
    max_iters: int = 500
    box_bound: float = 1e3

    def __post_init__(self) -> None:
        if self.step_size is not None and (
            not np.isfinite(self.step_size) or self.step_size <= 0
        ):
            raise ValueError("step_size must be positive when given")
        if not np.isfinite(self.tolerance) or self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if not np.isfinite(self.box_bound) or self.box_bound <= 0:
            raise ValueError("box_bound must be positive")


@dataclass(frozen=True)
class RunConfig:
    """Everything one orchestrated run needs besides the data."""

    n_users: int
    loss_kind: LossKind
    constraint: ConstraintSpec
    protection: ProtectionSpec
    scheme: MultiplierScheme
    tolerance: float = 1e-4
    max_iterations: int = 5000
    inner: InnerSolverConfig = field(default_factory=InnerSolverConfig)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_users < 1:
            raise ValueError("n_users must be positive")
        object.__setattr__(self, "loss_kind", LossKind(self.loss_kind))
        if not np.isfinite(self.tolerance) or self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if isinstance(self.constraint, SoftNormConsensus):
            if len(self.constraint.epsilon) != self.n_users:
                raise ValueError("epsilon must hold one radius per user")
        if isinstance(self.constraint, GroupConsensus):
            if len(self.constraint.adjacency) != self.n_users:
                raise ValueError("adjacency must hold one row per user")
        if isinstance(self.protection, L2Protection):
            if len(self.protection.varsigma) != self.n_users:
                raise ValueError("varsigma/delta must hold one entry per user")


def init_state(config: RunConfig, dim: int) -> SystemState:
    """Zero-initialized joint state.

    Weights, z and the multipliers start at zero except under
    FixedMultipliers, whose configured constants are broadcast.
    """
    if dim < 1:
        raise ValueError("dim must be positive")
    n = config.n_users
    lam0, mu0 = 0.0, 0.0
    if isinstance(config.scheme, FixedMultipliers):
        lam0, mu0 = config.scheme.lambda0, config.scheme.mu0
    return SystemState(
        weights=np.zeros((n, dim)),
        z=np.zeros(dim),
        lam=np.full(n, lam0),
        mu=np.full(n, mu0),
        iteration=0,
    )
