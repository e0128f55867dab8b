"""Round-based simulation of the distributed solve.

Algorithm 1 keeps the multipliers fixed: each round every user solves
its proximal subproblem against the previous round's snapshot, the
server averages (or the soft/group rule applies), and the run stops
once the stacked weight movement falls to the tolerance (inclusive).
Algorithm 2 additionally updates the multipliers inside the user step,
after the weight solves and before the consensus update.

Every transmission is logged as a Message.  Server mode counts one
uplink and one broadcast per user per round (plus one multiplier relay
per user under Algorithm 2); group mode counts one weights message per
directed edge per round and nothing else, since multiplier updates are
local there.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .centralized import compute_delta
from .config import RunConfig, init_state
from .constraints import (
    GroupConsensus,
    eval_equality,
    feasibility_residual,
)
from .local_solver import solve_local, update_z
from .model import Array, RunTrace, SystemState, TraceRecord, UserDataset, state_distance
from .multipliers import (
    FixedMultipliers,
    HyperplaneScheme,
    ProjectionScheme,
    TikhonovScheme,
    hyperplane_update,
    mu_step_size,
    phi,
    projection_update,
    tikhonov_update,
    update_mu,
)

MULTIPLIER_PAYLOAD = 2  # one lambda and one mu scalar


@dataclass(frozen=True)
class Message:
    """One logged transmission."""

    round: int
    sender: str
    receiver: str
    kind: str
    payload_size: int

    def __post_init__(self) -> None:
        if self.round < 1:
            raise ValueError("round must be positive")
        if self.payload_size < 1:
            raise ValueError("payload_size must be positive")
        if self.kind not in ("weights", "consensus", "multipliers"):
            raise ValueError(f"unknown message kind {self.kind!r}")


@dataclass
class OrchestratedRun:
    """Final state, per-round trace, and the full message log."""

    state: SystemState
    trace: RunTrace
    messages: list[Message] = field(default_factory=list)


def has_converged(prev: SystemState, curr: SystemState, tolerance: float) -> bool:
    """Stacked weight movement at or below the tolerance (inclusive)."""
    if not np.isfinite(tolerance) or tolerance <= 0:
        raise ValueError("tolerance must be finite and positive")
    return state_distance(prev, curr) <= tolerance


def run_algorithm1(
    config: RunConfig,
    datasets: list[UserDataset],
    w_star: Array | None = None,
) -> OrchestratedRun:
    """Fixed-multiplier rounds until convergence or the iteration cap."""
    return _run(config, datasets, w_star, variable_multipliers=False)


def run_algorithm2(
    config: RunConfig,
    datasets: list[UserDataset],
    w_star: Array | None = None,
) -> OrchestratedRun:
    """Rounds with multiplier updates between the user and server steps."""
    if isinstance(config.scheme, FixedMultipliers):
        raise ValueError("algorithm 2 needs a variable multiplier scheme")
    return _run(config, datasets, w_star, variable_multipliers=True)


def _log_weight_messages(
    messages: list[Message], config: RunConfig, t: int, dim: int
) -> None:
    constraint = config.constraint
    if isinstance(constraint, GroupConsensus):
        for n, m in constraint.directed_edges():
            messages.append(Message(t, f"user {n}", f"user {m}", "weights", dim))
    else:
        for n in range(config.n_users):
            messages.append(Message(t, f"user {n}", "server", "weights", dim))


def _log_consensus_messages(
    messages: list[Message], config: RunConfig, t: int, dim: int
) -> None:
    if isinstance(config.constraint, GroupConsensus):
        return
    for n in range(config.n_users):
        messages.append(Message(t, "server", f"user {n}", "consensus", dim))


def _log_multiplier_messages(
    messages: list[Message], config: RunConfig, t: int
) -> None:
    if isinstance(config.constraint, GroupConsensus):
        return
    for n in range(config.n_users):
        messages.append(
            Message(t, "server", f"user {n}", "multipliers", MULTIPLIER_PAYLOAD)
        )


def _update_multipliers(
    config: RunConfig,
    snapshot: SystemState,
    new_weights: Array,
    datasets: list[UserDataset],
    round_index: int,
) -> tuple[Array, Array]:
    """Step 1.3: scheme update for lam, plain gradient step for mu.

    Constraint residuals are evaluated at the fresh weights and the
    not-yet-updated consensus point, matching the listing order.
    """
    scheme = config.scheme
    solve_cache: dict[bytes, Array] = {}

    def phi_evaluator(lam_trial: Array) -> Array:
        # phi at a trial lam means: re-solve every user's subproblem at
        # that lam, then read off the slacks
        key = np.asarray(lam_trial, dtype=float).tobytes()
        if key not in solve_cache:
            if np.array_equal(lam_trial, snapshot.lam):
                trial_weights = new_weights
            else:
                trial_state = SystemState(
                    snapshot.weights,
                    snapshot.z,
                    np.maximum(0.0, np.asarray(lam_trial, dtype=float)),
                    snapshot.mu,
                    snapshot.iteration,
                )
                trial_weights = np.stack(
                    [
                        solve_local(n, trial_state, snapshot.weights[n], datasets, config)
                        for n in range(config.n_users)
                    ]
                )
            probe_state = SystemState(
                trial_weights, snapshot.z, snapshot.lam, snapshot.mu
            )
            solve_cache[key] = phi(probe_state, config.constraint)
        return solve_cache[key]

    if isinstance(scheme, ProjectionScheme):
        lam_new = projection_update(
            snapshot.lam, phi_evaluator(snapshot.lam), scheme.tau
        )
    elif isinstance(scheme, HyperplaneScheme):
        lam_new = hyperplane_update(
            snapshot.lam, phi_evaluator, scheme.delta, scheme.max_backtracks
        )
    elif isinstance(scheme, TikhonovScheme):
        lam_new = tikhonov_update(
            snapshot.lam,
            phi_evaluator,
            scheme.zeta_at(round_index - 1),
            scheme.tau_n,
            scheme.inner_iters,
        )
    else:
        raise ValueError(f"unsupported scheme {scheme!r}")

    eq_sums = np.array(
        [
            eval_equality(
                config.constraint, n, new_weights[n], snapshot.z, new_weights
            ).sum()
            for n in range(config.n_users)
        ]
    )
    mu_new = update_mu(snapshot.mu, eq_sums, mu_step_size(scheme))
    return lam_new, mu_new


def _run(
    config: RunConfig,
    datasets: list[UserDataset],
    w_star: Array | None,
    variable_multipliers: bool,
) -> OrchestratedRun:
    if len(datasets) != config.n_users:
        raise ValueError("datasets must hold one entry per user")
    dim = datasets[0].dim
    state = init_state(config, dim)
    trace = RunTrace()
    messages: list[Message] = []

    for t in range(1, config.max_iterations + 1):
        snapshot = state
        # step 1.1: every user solves against the round-start snapshot
        new_weights = np.stack(
            [
                solve_local(n, snapshot, snapshot.weights[n], datasets, config)
                for n in range(config.n_users)
            ]
        )
        _log_weight_messages(messages, config, t, dim)

        lam, mu = snapshot.lam, snapshot.mu
        if variable_multipliers:
            lam, mu = _update_multipliers(config, snapshot, new_weights, datasets, t)
            _log_multiplier_messages(messages, config, t)

        # step 2: consensus update sees the fresh weights and multipliers
        pre_z = SystemState(new_weights, snapshot.z, lam, mu, snapshot.iteration)
        z_new = update_z(pre_z, config.constraint)
        _log_consensus_messages(messages, config, t, dim)

        state = SystemState(new_weights, z_new, lam, mu, iteration=t)

        violation = max(
            feasibility_residual(
                config.constraint, n, new_weights[n], z_new, new_weights
            )
            for n in range(config.n_users)
        )
        delta_param = None
        if w_star is not None:
            delta_param, _ = compute_delta(state, w_star, config.loss_kind, datasets)
        change = state_distance(snapshot, state)
        trace.records.append(
            TraceRecord(
                iteration=t,
                weight_change=change,
                consensus_violation=violation,
                messages_sent=len(messages),
                lambda_max=float(lam.max()),
                lambda_min=float(lam.min()),
                delta_param=delta_param,
            )
        )
        trace.iterations_used = t
        if has_converged(snapshot, state, config.tolerance):
            trace.converged = True
            break

    return OrchestratedRun(state=state, trace=trace, messages=messages)
