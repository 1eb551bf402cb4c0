"""Importance-weighted cost estimation under bandit and semi-bandit feedback.

``iwe`` is the classic single-level estimator (observed cost divided by the
chosen arm's probability, zero elsewhere).  ``niwe`` is its layered version:
each on-path class's observed increment is divided by the probability of the
sampled path *prefix* down to that class; off-path classes get zero.  Summing
a leaf's estimated increments over its lineage gives its cost estimate, so an
observation for a coarse class updates every alternative underneath it.

``expected_estimator_moments`` enumerates every root-to-leaf path exactly and
serves as the testing oracle for the estimator's expectation and mean-square
bounds; it never calls ``niwe``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .choice import SamplePath
from .errors import (
    MissingIncrement,
    PathProbabilityZero,
    TooLargeToEnumerate,
    ZeroProbabilityArm,
)
from .tree import SimilarityTree

ENUMERATION_LEAF_LIMIT = 10_000


def iwe(
    costs: Sequence[float] | np.ndarray,
    strategy: Sequence[float] | np.ndarray,
    chosen_arm: int,
) -> np.ndarray:
    """Importance-weighted estimate of a cost vector from one bandit draw."""
    costs = np.asarray(costs, dtype=np.float64)
    strategy = np.asarray(strategy, dtype=np.float64)
    if costs.shape != strategy.shape:
        raise ValueError("costs and strategy must have matching shapes")
    if not 0 <= chosen_arm < len(strategy):
        raise ValueError(f"chosen arm {chosen_arm} out of range")
    p = float(strategy[chosen_arm])
    if p <= 0.0:
        raise ZeroProbabilityArm(f"arm {chosen_arm} has probability {p}")
    out = np.zeros_like(costs)
    out[chosen_arm] = costs[chosen_arm] / p
    return out


@dataclass(frozen=True)
class EstimatedIncrements:
    """Sparse per-class increment estimates: nonzero only on the sampled path."""

    classes: tuple[int, ...]
    delta_hat: np.ndarray

    def dense_by_class(self, tree: SimilarityTree) -> np.ndarray:
        """Per-node-id vector of estimates (zeros off the path)."""
        out = np.zeros(tree.num_nodes, dtype=np.float64)
        out[list(self.classes)] = self.delta_hat
        return out

    def leaf_costs(self, tree: SimilarityTree) -> np.ndarray:
        """Arm-indexed cost estimates: each leaf sums its on-path ancestors."""
        acc = np.zeros(tree.num_leaves, dtype=np.float64)
        for node, d in zip(self.classes, self.delta_hat):
            acc[tree.leaf_lo[node]:tree.leaf_hi[node]] += d
        out = np.empty(tree.num_leaves, dtype=np.float64)
        out[tree.arm_of_leafpos] = acc
        return out


def niwe(
    tree: SimilarityTree,
    path: SamplePath,
    observed_increments: Sequence[float] | np.ndarray,
) -> EstimatedIncrements:
    """Nested importance-weighted estimate from one sampled path.

    ``observed_increments[l-1]`` is the increment incurred at the level-l class
    of ``path`` (semi-bandit feedback: exactly the L on-path values).  The
    divisors are the prefix probabilities recorded at sampling time, never
    recomputed.
    """
    obs = np.asarray(observed_increments, dtype=np.float64)
    if obs.shape != (path.num_levels,):
        raise MissingIncrement(
            f"expected {path.num_levels} on-path increments, got {obs.shape}")
    if path.num_levels != tree.num_levels:
        raise MissingIncrement("path depth does not match the tree")
    prefix = path.path_prob_prefix
    if np.any(prefix <= 0.0):
        raise PathProbabilityZero("sampled path carries a zero prefix probability")
    return EstimatedIncrements(classes=path.classes, delta_hat=obs / prefix)


@dataclass(frozen=True)
class ExpectedMoments:
    """Exact expectations of the nested estimator, by full path enumeration.

    Attributes:
        e_delta_hat: per node id, E[delta_hat_C].
        e_weighted_sq: per node id, E[x_C * delta_hat_C**2].
        e_cost_weighted_sq: E[sum_a x_a * chat_a**2].
    """

    e_delta_hat: np.ndarray
    e_weighted_sq: np.ndarray
    e_cost_weighted_sq: float


def expected_estimator_moments(
    tree: SimilarityTree,
    strategy: Sequence[float] | np.ndarray,
    increments: Sequence[float] | np.ndarray,
) -> ExpectedMoments:
    """Enumerate every path the sampler could take, weighted by its probability.

    ``strategy`` is the full arm distribution (must have full support);
    ``increments`` is the per-node-id true increment vector.  Complexity is
    O(N^2 L); trees beyond ``ENUMERATION_LEAF_LIMIT`` leaves are refused.
    """
    if tree.num_leaves > ENUMERATION_LEAF_LIMIT:
        raise TooLargeToEnumerate(
            f"{tree.num_leaves} leaves exceed the enumeration limit")
    x_arm = np.asarray(strategy, dtype=np.float64)
    if x_arm.shape != (tree.num_leaves,):
        raise ValueError("strategy must be a full arm distribution")
    if np.any(x_arm <= 0.0):
        raise ZeroProbabilityArm("strategy must have full support")
    delta = np.asarray(increments, dtype=np.float64)
    if delta.shape != (tree.num_nodes,):
        raise ValueError("increments must be indexed by node id")

    x_pos = x_arm[tree.arm_of_leafpos]
    # Class masses; under the nested selection process the prefix probability
    # of an on-path class equals its mass (the conditionals telescope).
    mass = np.zeros(tree.num_nodes, dtype=np.float64)
    for v in range(tree.num_nodes):
        mass[v] = x_pos[tree.leaf_lo[v]:tree.leaf_hi[v]].sum()

    n = tree.num_nodes
    e_delta = np.zeros(n, dtype=np.float64)
    e_wsq = np.zeros(n, dtype=np.float64)
    e_cost_sq = 0.0
    chat = np.empty(tree.num_leaves, dtype=np.float64)
    for pos in range(tree.num_leaves):
        p_path = x_pos[pos]
        chat[:] = 0.0
        for node in tree.lineage_nodes[pos]:
            d_hat = delta[node] / mass[node]
            e_delta[node] += p_path * d_hat
            e_wsq[node] += p_path * mass[node] * d_hat * d_hat
            chat[tree.leaf_lo[node]:tree.leaf_hi[node]] += d_hat
        e_cost_sq += p_path * float(np.dot(x_pos, chat * chat))
    return ExpectedMoments(
        e_delta_hat=e_delta,
        e_weighted_sq=e_wsq,
        e_cost_weighted_sq=float(e_cost_sq),
    )
