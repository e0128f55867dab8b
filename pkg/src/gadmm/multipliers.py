"""Lagrange-multiplier update schemes.

The inequality multipliers (one scalar per user, stacked into a vector
``lam``) follow one of four schemes:

* FixedMultipliers: constants, never updated.
* ProjectionScheme: projected gradient step with fixed tau.
* HyperplaneScheme: three-step hyperplane projection with an
  Armijo-style backtracking search for the trial step.
* TikhonovScheme: an inner loop on the perturbed complementarity map
  phi + zeta * I with zeta shrinking across rounds.

All schemes act on the complementarity map phi_n = -g2_n, so a feasible
slack is positive and a violation is negative; the projected step then
raises lam exactly on violated constraints.

The equality multipliers ``mu`` are never projected: they move by plain
gradient steps mu_n += step * sum(g1_n), see ``update_mu``.  The step
comes from the scheme where it owns one (Projection: tau; Tikhonov:
1/tau_n); the hyperplane scheme carries no step of its own and uses
DEFAULT_MU_STEP.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Union

import numpy as np

from .constraints import ConstraintSpec, eval_inequality
from .model import Array

if TYPE_CHECKING:
    from .model import SystemState

PhiEvaluator = Callable[[Array], Array]

DEFAULT_MU_STEP = 2e-4


class StepSearchFailedError(RuntimeError):
    """Hyperplane backtracking exhausted without satisfying the test."""

    def __init__(self, last_l: int):
        super().__init__(
            f"hyperplane step search failed after l={last_l}; the residual "
            "is below the acceptance threshold delta"
        )
        self.last_l = last_l


@dataclass(frozen=True)
class FixedMultipliers:
    """Constants lambda0 (>= 0) and mu0 held for the whole run."""

    lambda0: float = 0.0
    mu0: float = 0.0

    def __post_init__(self) -> None:
        if not np.isfinite(self.lambda0) or self.lambda0 < 0:
            raise ValueError("lambda0 must be finite and non-negative")
        if not np.isfinite(self.mu0):
            raise ValueError("mu0 must be finite")


@dataclass(frozen=True)
class ProjectionScheme:
    """lam' = [lam - tau * phi(lam)]+ with fixed tau > 0."""

    tau: float = 2e-4

    def __post_init__(self) -> None:
        if not np.isfinite(self.tau) or self.tau <= 0:
            raise ValueError("tau must be finite and positive")


@dataclass(frozen=True)
class HyperplaneScheme:
    """Three-step hyperplane projection; delta in (0, 1)."""

    delta: float = 0.5
    max_backtracks: int = 40

    def __post_init__(self) -> None:
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie strictly between 0 and 1")
        if self.max_backtracks < 1:
            raise ValueError("max_backtracks must be positive")


@dataclass(frozen=True)
class TikhonovScheme:
    """Inner iteration on phi + zeta * I with zeta shrinking per round.

    zeta_schedule, when given, must be positive and non-increasing and
    is clamped at its last entry; otherwise zeta_k = zeta0 / (k + 1).
    """

    tau_n: float = 1.0
    inner_iters: int = 10
    zeta0: float = 0.1
    zeta_schedule: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if not np.isfinite(self.tau_n) or self.tau_n <= 0:
            raise ValueError("tau_n must be finite and positive")
        if self.inner_iters < 1:
            raise ValueError("inner_iters must be positive")
        if not np.isfinite(self.zeta0) or self.zeta0 <= 0:
            raise ValueError("zeta0 must be finite and positive")
        if self.zeta_schedule is not None:
            sched = tuple(float(z) for z in self.zeta_schedule)
            if not sched:
                raise ValueError("zeta_schedule must not be empty")
            if any(not np.isfinite(z) or z <= 0 for z in sched):
                raise ValueError("zeta_schedule entries must be positive")
            if any(b > a for a, b in zip(sched, sched[1:])):
                raise ValueError("zeta_schedule must be non-increasing")
            object.__setattr__(self, "zeta_schedule", sched)

    def zeta_at(self, k: int) -> float:
        """zeta for round k (0-based)."""
        if k < 0:
            raise ValueError("round index must be non-negative")
        if self.zeta_schedule is not None:
            return self.zeta_schedule[min(k, len(self.zeta_schedule) - 1)]
        return self.zeta0 / (k + 1)


MultiplierScheme = Union[
    FixedMultipliers, ProjectionScheme, HyperplaneScheme, TikhonovScheme
]


def phi(state: "SystemState", spec: ConstraintSpec) -> Array:
    """Complementarity map: phi_n = -g2_n(w_n, z), one entry per user.

    Vacuous-inequality variants give the zero vector.  Positive entries
    mean slack, negative entries mean violation.
    """
    return np.array(
        [
            -eval_inequality(spec, n, state.weights[n], state.z)
            for n in range(state.n_users)
        ]
    )


def projection_update(lam: Array, phi_vals: Array, tau: float) -> Array:
    """One projected gradient step [lam - tau * phi]+."""
    lam = np.asarray(lam, dtype=float)
    phi_vals = np.asarray(phi_vals, dtype=float)
    if lam.shape != phi_vals.shape:
        raise ValueError("lam and phi must have matching shapes")
    if not np.isfinite(tau) or tau <= 0:
        raise ValueError("tau must be finite and positive")
    return np.maximum(0.0, lam - tau * phi_vals)


def hyperplane_update(
    lam: Array,
    phi_evaluator: PhiEvaluator,
    delta: float,
    max_backtracks: int = 40,
) -> Array:
    """Hyperplane projection step.

    1. lam_quarter = [lam - phi(lam)]+
    2. find the smallest positive integer l with tau = 2**-l satisfying
       (lam - lam_quarter)' phi(lam - tau (lam - lam_quarter))
         >= delta * ||lam - lam_quarter||,
       re-querying phi at every trial point;
    3. project lam onto the hyperplane through the accepted trial point
       and clamp non-negative.

    Raises StepSearchFailedError when the backtracking budget is
    exhausted, which happens once the natural residual drops below
    about delta; callers should stop on a residual tolerance larger
    than delta before entering that zone.  If phi vanishes at the
    accepted trial point, lam_quarter is returned.
    """
    lam = np.asarray(lam, dtype=float)
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie strictly between 0 and 1")
    if max_backtracks < 1:
        raise ValueError("max_backtracks must be positive")

    phi0 = np.asarray(phi_evaluator(lam), dtype=float)
    lam_quarter = np.maximum(0.0, lam - phi0)
    r = lam - lam_quarter
    r_norm = float(np.linalg.norm(r))

    lam_half = None
    for l in range(1, max_backtracks + 1):
        tau = 2.0**-l
        trial = lam - tau * r
        phi_trial = np.asarray(phi_evaluator(trial), dtype=float)
        if float(r @ phi_trial) >= delta * r_norm:
            lam_half = trial
            phi_half = phi_trial
            break
    if lam_half is None:
        raise StepSearchFailedError(max_backtracks)

    denom = float(phi_half @ phi_half)
    if denom == 0.0:
        return lam_quarter
    # exact projection onto {u : phi_half'(u - lam_half) = 0}; the
    # coefficient carries the accepted tau through lam - lam_half, a
    # larger step overshoots the hyperplane and can cycle
    step = float((lam - lam_half) @ phi_half) / denom
    return np.maximum(0.0, lam - step * phi_half)


def tikhonov_update(
    lam: Array,
    phi_evaluator: PhiEvaluator,
    zeta: float,
    tau_n: float,
    inner_iters: int,
) -> Array:
    """Inner loop on the perturbed map with phi frozen at the outer lam.

    lam_hat^{l+1} = [lam_hat^l - (phi(lam) + zeta * lam_hat^l) / tau_n]+
    for l = 0 .. inner_iters-1, starting from lam_hat^0 = lam.  Returns
    the final inner iterate.
    """
    lam = np.asarray(lam, dtype=float)
    if not np.isfinite(zeta) or zeta <= 0:
        raise ValueError("zeta must be finite and positive")
    if not np.isfinite(tau_n) or tau_n <= 0:
        raise ValueError("tau_n must be finite and positive")
    if inner_iters < 1:
        raise ValueError("inner_iters must be positive")
    phi_fixed = np.asarray(phi_evaluator(lam), dtype=float)
    lam_hat = lam.copy()
    for _ in range(inner_iters):
        lam_hat = np.maximum(0.0, lam_hat - (phi_fixed + zeta * lam_hat) / tau_n)
    return lam_hat


def tikhonov_step_valid(tau_n: float, cocoercivity: float, zeta: float) -> bool:
    """Whether tau_n clears the sufficient bound (1/c + zeta)^2 / (2 zeta).

    The bound is sufficient, not necessary; smaller steps can still
    converge in practice.  The comparison is strict.
    """
    if not np.isfinite(cocoercivity) or cocoercivity <= 0:
        raise ValueError("cocoercivity must be finite and positive")
    if not np.isfinite(zeta) or zeta <= 0:
        raise ValueError("zeta must be finite and positive")
    if not np.isfinite(tau_n) or tau_n <= 0:
        raise ValueError("tau_n must be finite and positive")
    threshold = (1.0 / cocoercivity + zeta) ** 2 / (2.0 * zeta)
    return tau_n > threshold


def mu_step_size(scheme: MultiplierScheme) -> float:
    """Gradient step used for the equality multipliers under a scheme."""
    if isinstance(scheme, ProjectionScheme):
        return scheme.tau
    if isinstance(scheme, TikhonovScheme):
        return 1.0 / scheme.tau_n
    return DEFAULT_MU_STEP


def update_mu(mu: Array, equality_sums: Array, step: float) -> Array:
    """Plain unprojected gradient step mu += step * sum(g1 components)."""
    mu = np.asarray(mu, dtype=float)
    equality_sums = np.asarray(equality_sums, dtype=float)
    if mu.shape != equality_sums.shape:
        raise ValueError("mu and equality_sums must have matching shapes")
    if not np.isfinite(step) or step <= 0:
        raise ValueError("step must be finite and positive")
    return mu + step * equality_sums
