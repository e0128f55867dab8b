"""Consensus couplings between user weights and the shared iterate.

Three variants:

* Classical: hard per-user equality w_n = z.
* SoftNorm: relaxed p-norm ball ||w_n - z||_p^p <= eps_n, p in {1, 2};
  this is the only variant with a (scalar) inequality part.
* Group: server-less equality w_n = w_m over a symmetric irreflexive
  neighbor graph; z is unused.

Each user's equality block g1_n and inequality scalar g2_n follow the
sign convention "feasible iff g1 = 0 and g2 <= 0".  Variants without an
inequality report g2 = 0 (vacuously satisfied).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .model import Array


@dataclass(frozen=True)
class ClassicalConsensus:
    """Hard equality of every user's weights with the consensus point."""


@dataclass(frozen=True)
class SoftNormConsensus:
    """Per-user relaxed ball ||w_n - z||_p^p <= epsilon[n]."""

    p: int
    epsilon: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.p not in (1, 2):
            raise ValueError("p must be 1 or 2")
        eps = tuple(float(e) for e in self.epsilon)
        if len(eps) < 1:
            raise ValueError("epsilon must hold one radius per user")
        if any(not np.isfinite(e) or e < 0 for e in eps):
            raise ValueError("epsilon entries must be finite and non-negative")
        object.__setattr__(self, "epsilon", eps)


@dataclass(frozen=True)
class GroupConsensus:
    """Neighbor equalities w_n = w_m; adjacency[n] lists user n's neighbors."""

    adjacency: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        adj = tuple(tuple(int(m) for m in row) for row in self.adjacency)
        n = len(adj)
        for i, row in enumerate(adj):
            if len(set(row)) != len(row):
                raise ValueError("duplicate neighbor entries")
            for m in row:
                if not 0 <= m < n:
                    raise ValueError("neighbor index out of range")
                if m == i:
                    raise ValueError("adjacency must be irreflexive")
                if i not in adj[m]:
                    raise ValueError("adjacency must be symmetric")
        object.__setattr__(self, "adjacency", adj)

    def directed_edges(self) -> list[tuple[int, int]]:
        return [(n, m) for n, row in enumerate(self.adjacency) for m in row]

    def undirected_edges(self) -> list[tuple[int, int]]:
        """Each edge once, owned by the smaller endpoint."""
        return [(n, m) for n, row in enumerate(self.adjacency) for m in row if n < m]


ConstraintSpec = Union[ClassicalConsensus, SoftNormConsensus, GroupConsensus]


def eval_equality(
    spec: ConstraintSpec,
    n: int,
    w_n: Array,
    z: Array,
    all_weights: Array | None = None,
) -> Array:
    """Equality residual block g1_n for user n.

    Classical: w_n - z.  SoftNorm: empty vector.  Group: concatenation
    of (w_n - w_m) over user n's neighbors, which requires
    ``all_weights``.
    """
    w_n = np.asarray(w_n, dtype=float)
    if isinstance(spec, ClassicalConsensus):
        return w_n - np.asarray(z, dtype=float)
    if isinstance(spec, SoftNormConsensus):
        return np.zeros(0)
    if isinstance(spec, GroupConsensus):
        if all_weights is None:
            raise ValueError("group constraint needs all_weights")
        neighbors = spec.adjacency[n]
        if not neighbors:
            return np.zeros(0)
        W = np.asarray(all_weights, dtype=float)
        return np.concatenate([w_n - W[m] for m in neighbors])
    raise ValueError(f"unsupported constraint {spec!r}")


def eval_inequality(spec: ConstraintSpec, n: int, w_n: Array, z: Array) -> float:
    """Inequality residual g2_n; feasible iff <= 0. Vacuous variants give 0."""
    if isinstance(spec, (ClassicalConsensus, GroupConsensus)):
        return 0.0
    if isinstance(spec, SoftNormConsensus):
        diff = np.asarray(w_n, dtype=float) - np.asarray(z, dtype=float)
        if spec.p == 2:
            return float(diff @ diff) - spec.epsilon[n]
        return float(np.abs(diff).sum()) - spec.epsilon[n]
    raise ValueError(f"unsupported constraint {spec!r}")


def grad_inequality(
    spec: ConstraintSpec, n: int, w_n: Array, z: Array
) -> tuple[Array, Array]:
    """(d g2 / d w_n, d g2 / d z).  Subgradient with sign(0) = 0 for p = 1."""
    w_n = np.asarray(w_n, dtype=float)
    z = np.asarray(z, dtype=float)
    if isinstance(spec, (ClassicalConsensus, GroupConsensus)):
        return np.zeros_like(w_n), np.zeros_like(z)
    if isinstance(spec, SoftNormConsensus):
        diff = w_n - z
        if spec.p == 2:
            g = 2.0 * diff
        else:
            g = np.sign(diff)
        return g, -g
    raise ValueError(f"unsupported constraint {spec!r}")


def feasibility_residual(
    spec: ConstraintSpec,
    n: int,
    w_n: Array,
    z: Array,
    all_weights: Array | None = None,
) -> float:
    """Scalar infeasibility for user n: max(||g1||, positive part of g2)."""
    eq = eval_equality(spec, n, w_n, z, all_weights)
    ineq = eval_inequality(spec, n, w_n, z)
    eq_norm = float(np.linalg.norm(eq)) if eq.size else 0.0
    return max(eq_norm, max(0.0, ineq))


def stacked_equality(spec: ConstraintSpec, weights: Array, z: Array) -> Array:
    """All equality rows of the system, each counted once.

    Classical stacks one block per user.  Group stacks one block per
    undirected edge (owner = smaller endpoint) so that shared edges do
    not appear twice.  SoftNorm has no equality rows.
    """
    W = np.asarray(weights, dtype=float)
    if isinstance(spec, ClassicalConsensus):
        return (W - np.asarray(z, dtype=float)[None, :]).ravel()
    if isinstance(spec, SoftNormConsensus):
        return np.zeros(0)
    if isinstance(spec, GroupConsensus):
        edges = spec.undirected_edges()
        if not edges:
            return np.zeros(0)
        return np.concatenate([W[n] - W[m] for n, m in edges])
    raise ValueError(f"unsupported constraint {spec!r}")


@dataclass(frozen=True, eq=False)
class LinearConstraintMatrices:
    """Linear-system view g1 = d - C w, g2 = b - A w and the block matrix M2.

    C and A act at the user level (one row/column per user); expand by
    Kronecker product with the identity where a per-coordinate view is
    needed.  M2 = [[0, C', A'], [-C', 0, 0], [-A', 0, 0]] must be
    exactly skew-symmetric, which is checked at construction.
    """

    C: Array
    d_vec: Array
    A: Array
    b_vec: Array
    M2: Array

    def __post_init__(self) -> None:
        if not np.array_equal(self.M2, -self.M2.T):
            raise ValueError("M2 must be skew-symmetric")


def build_linear_matrices(
    spec: ConstraintSpec, n_users: int, corrected: bool = False
) -> LinearConstraintMatrices:
    """Assemble the user-level constraint matrices for a variant.

    Classical ships with +1/N off-diagonal entries by default; passing
    ``corrected=True`` flips them to -1/N, which makes C w the usual
    deviation-from-average residual.  The flag has no effect on the
    other variants.  SoftNorm has no linear representation and is
    rejected.
    """
    if n_users < 1:
        raise ValueError("n_users must be positive")
    if isinstance(spec, SoftNormConsensus):
        raise ValueError("soft-norm constraint has no linear matrix form")
    if isinstance(spec, ClassicalConsensus):
        off = -1.0 / n_users if corrected else 1.0 / n_users
        C = np.full((n_users, n_users), off)
        np.fill_diagonal(C, 1.0 - 1.0 / n_users)
    elif isinstance(spec, GroupConsensus):
        if len(spec.adjacency) != n_users:
            raise ValueError("adjacency size does not match n_users")
        C = np.zeros((n_users, n_users))
        np.fill_diagonal(C, 1.0)
        for n, row in enumerate(spec.adjacency):
            for m in row:
                C[n, m] = -1.0
    else:
        raise ValueError(f"unsupported constraint {spec!r}")

    A = np.zeros((0, n_users))
    d_vec = np.zeros(C.shape[0])
    b_vec = np.zeros(0)
    ne, ni = C.shape[0], A.shape[0]
    M2 = np.block(
        [
            [np.zeros((n_users, n_users)), C.T, A.T],
            [-C, np.zeros((ne, ne)), np.zeros((ne, ni))],
            [-A, np.zeros((ni, ne)), np.zeros((ni, ni))],
        ]
    )
    return LinearConstraintMatrices(C=C, d_vec=d_vec, A=A, b_vec=b_vec, M2=M2)
