"""Core data types and synthetic problem generation.

A system of N users each holds a private supervised dataset and a local
weight vector.  A coordinator (or, in group mode, the users themselves)
keeps the shared consensus iterate.  Everything in this module is plain
data plus deterministic generators; no solver logic lives here.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

Array = np.ndarray


@dataclass
class UserDataset:
    """One user's data: features with shape (m, d), labels with shape (m,)."""

    features: Array
    labels: Array

    def __post_init__(self) -> None:
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError("features must be a non-empty 2-d array")
        if y.shape != (X.shape[0],):
            raise ValueError("labels must be 1-d with one entry per sample")
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise ValueError("dataset contains non-finite values")
        self.features = X
        self.labels = y

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass
class SystemState:
    """Joint iterate: per-user weights, consensus point, multipliers.

    ``weights`` has shape (N, d), ``z`` shape (d,).  ``lam`` and ``mu``
    hold one scalar per user: the inequality and equality multipliers.
    ``lam`` must be non-negative at all times.
    """

    weights: Array
    z: Array
    lam: Array
    mu: Array
    iteration: int = 0

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        self.lam = np.asarray(self.lam, dtype=float)
        self.mu = np.asarray(self.mu, dtype=float)
        if self.weights.ndim != 2:
            raise ValueError("weights must have shape (n_users, dim)")
        n, d = self.weights.shape
        if self.z.shape != (d,):
            raise ValueError("z must have shape (dim,)")
        if self.lam.shape != (n,) or self.mu.shape != (n,):
            raise ValueError("lam and mu must hold one scalar per user")
        if (self.lam < 0).any():
            raise ValueError("lam must be non-negative")
        if self.iteration < 0:
            raise ValueError("iteration must be non-negative")

    @property
    def n_users(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> SystemState:
        return SystemState(
            self.weights.copy(),
            self.z.copy(),
            self.lam.copy(),
            self.mu.copy(),
            self.iteration,
        )


@dataclass
class TraceRecord:
    """Bookkeeping for one orchestration round.

    ``weight_change`` is the Euclidean norm of the stacked difference of
    all user weights against the previous round (the stopping quantity).
    ``delta_param`` is only present when a centralized reference was
    supplied to the run.
    """

    iteration: int
    weight_change: float
    consensus_violation: float
    messages_sent: int
    lambda_max: float
    lambda_min: float
    delta_param: float | None = None


@dataclass
class RunTrace:
    """Full per-round history of one orchestrated run."""

    records: list[TraceRecord] = field(default_factory=list)
    converged: bool = False
    iterations_used: int = 0

    def validate(self) -> None:
        if len(self.records) != self.iterations_used:
            raise ValueError("record count must equal iterations_used")
        last = 0
        for rec in self.records:
            if rec.iteration != last + 1:
                raise ValueError("iterations must be contiguous from 1")
            last = rec.iteration
        msgs = [rec.messages_sent for rec in self.records]
        if any(b < a for a, b in zip(msgs, msgs[1:])):
            raise ValueError("cumulative message counts must be non-decreasing")

    @property
    def final_messages(self) -> int:
        return self.records[-1].messages_sent if self.records else 0


def generate_synthetic(
    seed: int,
    n_users: int,
    samples_per_user: int,
    dim: int,
    noise_std: float,
    task: str = "linear",
) -> tuple[list[UserDataset], Array]:
    """Draw a ground-truth weight vector and per-user datasets.

    Features are i.i.d. standard normal.  For the linear task the labels
    are ``X w* + noise``; for the logistic task they are
    ``sign(X w* + noise)`` in {-1, +1} (ties broken towards +1).  The
    same seed reproduces the same arrays bit for bit.

    Parameters
    ----------
    seed:
        Seed for the deterministic generator.
    n_users, samples_per_user, dim:
        Positive sizes of the synthetic system.
    noise_std:
        Non-negative label-noise standard deviation.
    task:
        "linear" or "logistic" (a LossKind value is accepted).

    Returns
    -------
    (datasets, w_star): the per-user datasets and the shared ground
    truth.
    """
    if n_users < 1 or samples_per_user < 1 or dim < 1:
        raise ValueError("n_users, samples_per_user and dim must be positive")
    if not np.isfinite(noise_std) or noise_std < 0:
        raise ValueError("noise_std must be finite and non-negative")
    kind = str(getattr(task, "value", task))
    if kind not in ("linear", "logistic"):
        raise ValueError(f"unsupported task {task!r}")

    rng = np.random.default_rng(seed)
    w_star = rng.standard_normal(dim)
    datasets = []
    for _ in range(n_users):
        X = rng.standard_normal((samples_per_user, dim))
        noise = noise_std * rng.standard_normal(samples_per_user)
        raw = X @ w_star + noise
        if kind == "linear":
            y = raw
        else:
            y = np.where(raw >= 0.0, 1.0, -1.0)
        datasets.append(UserDataset(X, y))
    return datasets, w_star


def state_distance(a: SystemState, b: SystemState) -> float:
    """Euclidean norm of the stacked difference of user weights.

    The consensus iterate z is deliberately excluded: the stopping rule
    watches only the user weights.
    """
    if a.weights.shape != b.weights.shape:
        raise ValueError("states have mismatched weight shapes")
    return float(np.linalg.norm(a.weights - b.weights))
