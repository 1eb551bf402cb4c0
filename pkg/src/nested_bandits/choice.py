"""Nested logit choice: score propagation, class probabilities, sampling.

A leaf score profile ``y`` is propagated to every class bottom-up: the score
of a class is the temperature-``mu`` log-sum-exp of its children's scores.
Child-given-parent probabilities are softmaxes of sibling scores at the
parent level's temperature, and an arm is drawn top-down, one categorical
per level.

All probability arithmetic is done in log space with per-sibling-set max
subtraction, so uniformly shifting the leaf scores shifts every class score
by the same constant and leaves every probability unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NonFiniteScore, RootHasNoParent, UnknownClass
from .tree import SimilarityTree


@dataclass(frozen=True)
class UncertaintyParams:
    """Per-level softmax temperatures mu^(1) >= ... >= mu^(L) > 0."""

    mu: tuple[float, ...]

    def __post_init__(self):
        mu = tuple(float(v) for v in self.mu)
        object.__setattr__(self, "mu", mu)
        if not mu:
            raise ValueError("need at least one uncertainty parameter")
        if any(v <= 0 for v in mu):
            raise ValueError("uncertainty parameters must be positive")
        if any(a < b for a, b in zip(mu, mu[1:])):
            raise ValueError("uncertainty parameters must be nonincreasing")

    @classmethod
    def uniform(cls, value: float, num_levels: int) -> "UncertaintyParams":
        return cls((float(value),) * num_levels)

    def of_level(self, lvl: int) -> float:
        """Temperature used between levels ``lvl-1`` and ``lvl`` (1-based)."""
        return self.mu[lvl - 1]

    def as_level_array(self) -> np.ndarray:
        """Temperatures indexed by level, slot 0 unused."""
        return np.concatenate([[np.nan], np.asarray(self.mu, dtype=np.float64)])


def segment_softmax(values: np.ndarray, seg_starts: np.ndarray, mu: float) -> np.ndarray:
    """Softmax of ``values / mu`` within each contiguous segment.

    ``seg_starts`` are offsets into ``values``; the last segment runs to the
    end.  Each segment's result sums to 1 (up to float rounding).  This is the
    single softmax implementation shared by every numpy-path consumer, so
    flat-tree sampling and plain exponential weights produce bit-identical
    probabilities from identical score arrays.
    """
    z = values / mu
    m = np.maximum.reduceat(z, seg_starts)
    sizes = np.diff(np.append(seg_starts, len(z)))
    p = np.exp(z - np.repeat(m, sizes))
    s = np.add.reduceat(p, seg_starts)
    p /= np.repeat(s, sizes)
    return p


@dataclass(frozen=True)
class ScoreState:
    """Leaf scores plus the propagated per-class scores for one (tree, mu)."""

    tree: SimilarityTree
    mu: UncertaintyParams
    class_scores: np.ndarray  # per node id

    @property
    def leaf_scores(self) -> np.ndarray:
        """Arm-indexed copy of the leaf-level scores."""
        t = self.tree
        return self.class_scores[t.node_of_leafpos[t.leafpos_of_arm]].copy()


@dataclass(frozen=True)
class SamplePath:
    """One top-down draw: chosen classes at levels 1..L and the arm.

    ``path_prob_prefix[l-1]`` is the product of the conditional probabilities
    actually used while sampling down to level ``l`` — exactly the denominators
    the nested importance-weighted estimator must divide by.
    """

    classes: tuple[int, ...]
    arm: int
    path_prob_prefix: np.ndarray
    cond_probs: np.ndarray

    @property
    def num_levels(self) -> int:
        return len(self.classes)


def _check_mu(tree: SimilarityTree, mu: UncertaintyParams) -> None:
    if len(mu.mu) != tree.num_levels:
        raise ValueError(
            f"got {len(mu.mu)} uncertainty parameters for {tree.num_levels} levels")


def propagate_scores(
    tree: SimilarityTree,
    mu: UncertaintyParams,
    leaf_scores: Sequence[float] | np.ndarray,
) -> ScoreState:
    """Propagate arm-indexed leaf scores to every class (weighted softmax)."""
    _check_mu(tree, mu)
    y = np.asarray(leaf_scores, dtype=np.float64)
    if y.shape != (tree.num_leaves,):
        raise ValueError(f"expected {tree.num_leaves} leaf scores, got {y.shape}")
    if not np.isfinite(y).all():
        raise NonFiniteScore("leaf scores must be finite")

    scores = np.empty(tree.num_nodes, dtype=np.float64)
    scores[tree.node_of_leafpos] = y[tree.arm_of_leafpos]
    L = tree.num_levels
    for lvl in range(L, 0, -1):
        lo, hi = tree.level_start[lvl], tree.level_start[lvl + 1]
        parents = np.arange(tree.level_start[lvl - 1], tree.level_start[lvl])
        starts = tree.child_ptr[parents] - lo
        m = mu.of_level(lvl)
        z = scores[lo:hi] / m
        zmax = np.maximum.reduceat(z, starts)
        sizes = np.diff(np.append(starts, hi - lo))
        s = np.add.reduceat(np.exp(z - np.repeat(zmax, sizes)), starts)
        scores[parents] = m * (zmax + np.log(s))
    return ScoreState(tree=tree, mu=mu, class_scores=scores)


def children_probs(state: ScoreState, parent: int) -> np.ndarray:
    """Conditional choice probabilities of ``parent``'s children, in id order."""
    tree = state.tree
    tree._check_node(parent)
    if tree.is_leaf(parent):
        return np.empty(0, dtype=np.float64)
    kids = tree.children(parent)
    lvl = int(tree.level[parent]) + 1
    return segment_softmax(
        state.class_scores[kids[0]:kids[-1] + 1],
        np.zeros(1, dtype=np.int64),
        state.mu.of_level(lvl),
    )


def conditional_prob(state: ScoreState, child: int) -> float:
    """P(child | parent) under the nested logit rule."""
    tree = state.tree
    tree._check_node(child)
    if child == tree.root:
        raise RootHasNoParent("the root is not conditioned on anything")
    parent = int(tree.parent[child])
    probs = children_probs(state, parent)
    return float(probs[child - tree.child_ptr[parent]])


def total_prob(state: ScoreState, class_id: int) -> float:
    """Unconditional probability of reaching ``class_id``: the product of
    conditional probabilities along its lineage (accumulated in log space)."""
    tree = state.tree
    tree._check_node(class_id)
    if class_id == tree.root:
        return 1.0
    log_p = 0.0
    v = int(class_id)
    while v != tree.root:
        log_p += float(np.log(conditional_prob(state, v)))
        v = int(tree.parent[v])
    return float(np.exp(log_p))


def class_prob_map(state: ScoreState) -> np.ndarray:
    """Per-node unconditional choice probabilities, every class at once."""
    tree = state.tree
    probs = np.ones(tree.num_nodes, dtype=np.float64)
    for lvl in range(1, tree.num_levels + 1):
        lo, hi = tree.level_start[lvl], tree.level_start[lvl + 1]
        parents = np.arange(tree.level_start[lvl - 1], tree.level_start[lvl])
        starts = tree.child_ptr[parents] - lo
        cond = segment_softmax(state.class_scores[lo:hi], starts, state.mu.of_level(lvl))
        sizes = np.diff(np.append(starts, hi - lo))
        probs[lo:hi] = cond * np.repeat(probs[parents], sizes)
    return probs


def leaf_distribution(state: ScoreState) -> np.ndarray:
    """Arm-indexed distribution induced over the leaves (sums to 1)."""
    tree = state.tree
    x_leafpos = class_prob_map(state)[tree.node_of_leafpos]
    out = np.empty(tree.num_leaves, dtype=np.float64)
    out[tree.arm_of_leafpos] = x_leafpos
    return out


def sample_path(state: ScoreState, rng: np.random.Generator) -> SamplePath:
    """Draw one root-to-leaf path, one uniform per level (inverse CDF over the
    ordered children).  Probabilities recorded are the ones used to sample."""
    tree = state.tree
    L = tree.num_levels
    classes = []
    conds = np.empty(L, dtype=np.float64)
    prefix = np.empty(L, dtype=np.float64)
    node = tree.root
    running = 1.0
    for lvl in range(1, L + 1):
        probs = children_probs(state, node)
        u = rng.random()
        idx = int(np.searchsorted(np.cumsum(probs), u, side="right"))
        idx = min(idx, len(probs) - 1)
        node = int(tree.child_ptr[node] + idx)
        conds[lvl - 1] = probs[idx]
        running *= float(probs[idx])
        prefix[lvl - 1] = running
        classes.append(node)
    arm = tree.arm_of_leaf(node)
    return SamplePath(
        classes=tuple(classes),
        arm=arm,
        path_prob_prefix=prefix,
        cond_probs=conds,
    )
