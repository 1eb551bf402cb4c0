"""Similarity structures over a set of alternatives.

A similarity structure is a rooted tree (arborescence) whose level-``l`` nodes
partition the arms into successively finer classes: level 0 is the root (all
arms), level ``L`` the singletons.  Each class at levels 1..L carries a range
``R_C`` bounding its idiosyncratic cost increment, with every root-to-leaf
range sum normalized to at most 1.

The tree is stored as flat numpy arrays in breadth-first id order so that

* nodes of one level occupy a contiguous id block,
* children of a node occupy a contiguous id block,
* the descendant leaves of a node occupy a contiguous block of leaf
  positions,

which is what the simulation kernels rely on.  Arm indices are a (usually
identity) permutation of leaf positions, so arbitrary arm orders in explicit
tree files are honored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    EmptyClass,
    NoLeaves,
    NonNestedPartition,
    RangeNormalizationViolated,
    UnknownClass,
)

RANGE_SUM_TOL = 1e-12


@dataclass(frozen=True)
class SimilarityTree:
    """Immutable similarity structure in breadth-first array form.

    Attributes:
        num_levels: depth L >= 1 (leaves live exactly at level L).
        num_leaves: number of arms N >= 1.
        level: per-node level, ``level[0] == 0`` (root).
        parent: per-node parent id, -1 for the root.
        child_ptr: CSR offsets; children of node v are ids
            ``child_ptr[v]..child_ptr[v+1]`` (contiguous by construction).
        range_: per-node increment range R_C (0.0 for the root).
        level_start: nodes of level l are ids ``level_start[l]..level_start[l+1]``.
        leaf_lo / leaf_hi: half-open span of leaf positions under each node.
        node_of_leafpos: node id of the level-L class at each leaf position.
        lineage_nodes: shape (N, L); ancestors of each leaf position at
            levels 1..L (last entry is the leaf itself).
        arm_of_leafpos / leafpos_of_arm: permutations between leaf positions
            (breadth-first order) and external arm indices.
    """

    num_levels: int
    num_leaves: int
    level: np.ndarray
    parent: np.ndarray
    child_ptr: np.ndarray
    range_: np.ndarray
    level_start: np.ndarray
    leaf_lo: np.ndarray
    leaf_hi: np.ndarray
    node_of_leafpos: np.ndarray
    lineage_nodes: np.ndarray
    arm_of_leafpos: np.ndarray
    leafpos_of_arm: np.ndarray

    @property
    def num_nodes(self) -> int:
        return int(self.level.shape[0])

    @property
    def root(self) -> int:
        return 0

    def children(self, node: int) -> np.ndarray:
        self._check_node(node)
        return np.arange(self.child_ptr[node], self.child_ptr[node + 1], dtype=np.int32)

    def is_leaf(self, node: int) -> bool:
        self._check_node(node)
        return int(self.level[node]) == self.num_levels

    def arm_of_leaf(self, node: int) -> int:
        """Arm index of a level-L node."""
        if not self.is_leaf(node):
            raise UnknownClass(f"node {node} is not a leaf")
        return int(self.arm_of_leafpos[self.leaf_lo[node]])

    def leaf_of_arm(self, arm: int) -> int:
        """Level-L node id for an arm index."""
        if not 0 <= arm < self.num_leaves:
            raise UnknownClass(f"arm {arm} out of range")
        return int(self.node_of_leafpos[self.leafpos_of_arm[arm]])

    def nodes_at_level(self, lvl: int) -> np.ndarray:
        if not 0 <= lvl <= self.num_levels:
            raise UnknownClass(f"level {lvl} out of range")
        return np.arange(self.level_start[lvl], self.level_start[lvl + 1], dtype=np.int32)

    def _check_node(self, node: int) -> None:
        if not 0 <= node < self.num_nodes:
            raise UnknownClass(f"class id {node} out of range")


@dataclass(frozen=True)
class TreeConstants:
    """Structural constants of a similarity tree.

    ``n_eff`` is the effective number of alternatives,
    ``(sum_l sqrt(m^(l)) Rbar^(l))**2``, and ``rho = sqrt(N / n_eff)`` the
    worst-case regret-guarantee ratio between flat and nested exponential
    weights.  ``K[l]`` is the maximum child count of any level-(l-1) class.
    """

    m: tuple[int, ...]
    r_bar: tuple[float, ...]
    n_eff: float
    rho: float
    K: tuple[int, ...]


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _assemble(
    num_levels: int,
    level: np.ndarray,
    parent: np.ndarray,
    range_: np.ndarray,
    arm_perm: np.ndarray | None,
) -> SimilarityTree:
    """Build derived arrays and validate invariants. Inputs are in BFS id order."""
    n_nodes = level.shape[0]
    L = num_levels

    counts = np.bincount(parent[1:], minlength=n_nodes)
    child_ptr = np.empty(n_nodes + 1, dtype=np.int32)
    child_ptr[0] = 1  # node 0 is the root; ids of its children start at 1
    child_ptr[1:] = 1 + np.cumsum(counts, dtype=np.int64).astype(np.int32)
    # BFS order guarantees children of v are exactly the contiguous id block.
    for v in range(1, n_nodes):
        p = parent[v]
        if not (child_ptr[p] <= v < child_ptr[p + 1]):
            raise AssertionError("breadth-first id assignment broken")

    level_start = np.zeros(L + 2, dtype=np.int32)
    for lvl in range(L + 1):
        idx = np.nonzero(level == lvl)[0]
        if idx.size == 0:
            raise NoLeaves(f"no classes at level {lvl}")
        level_start[lvl] = idx[0]
        level_start[lvl + 1] = idx[-1] + 1

    internal = np.nonzero(level < L)[0]
    no_children = internal[child_ptr[internal] == child_ptr[internal + 1]]
    if no_children.size:
        raise EmptyClass(f"class {int(no_children[0])} at level "
                         f"{int(level[no_children[0]])} has no children")

    leaves = np.nonzero(level == L)[0]
    N = leaves.size
    if N == 0:
        raise NoLeaves("tree has no leaves")

    leaf_lo = np.zeros(n_nodes, dtype=np.int32)
    leaf_hi = np.zeros(n_nodes, dtype=np.int32)
    leaf_lo[leaves] = np.arange(N, dtype=np.int32)
    leaf_hi[leaves] = leaf_lo[leaves] + 1
    for v in range(n_nodes - 1, 0, -1):  # children have larger ids than parents
        p = parent[v]
        if leaf_hi[p] == 0:
            leaf_lo[p], leaf_hi[p] = leaf_lo[v], leaf_hi[v]
        else:
            leaf_lo[p] = min(leaf_lo[p], leaf_lo[v])
            leaf_hi[p] = max(leaf_hi[p], leaf_hi[v])

    node_of_leafpos = leaves.astype(np.int32)
    lineage_nodes = np.zeros((N, L), dtype=np.int32)
    for pos in range(N):
        v = int(node_of_leafpos[pos])
        for lvl in range(L, 0, -1):
            lineage_nodes[pos, lvl - 1] = v
            v = int(parent[v])

    path_sums = range_[lineage_nodes].sum(axis=1)
    worst = int(np.argmax(path_sums))
    if path_sums[worst] > 1.0 + RANGE_SUM_TOL:
        raise RangeNormalizationViolated(
            f"range sum {path_sums[worst]:.15g} > 1 on the path to leaf position {worst}")

    if arm_perm is None:
        arm_of_leafpos = np.arange(N, dtype=np.int32)
    else:
        arm_of_leafpos = np.asarray(arm_perm, dtype=np.int32)
        if sorted(arm_of_leafpos.tolist()) != list(range(N)):
            raise UnknownClass("arm order is not a permutation of the leaves")
    leafpos_of_arm = np.empty(N, dtype=np.int32)
    leafpos_of_arm[arm_of_leafpos] = np.arange(N, dtype=np.int32)

    return SimilarityTree(
        num_levels=L,
        num_leaves=int(N),
        level=_freeze(level),
        parent=_freeze(parent),
        child_ptr=_freeze(child_ptr),
        range_=_freeze(range_),
        level_start=_freeze(level_start),
        leaf_lo=_freeze(leaf_lo),
        leaf_hi=_freeze(leaf_hi),
        node_of_leafpos=_freeze(node_of_leafpos),
        lineage_nodes=_freeze(lineage_nodes),
        arm_of_leafpos=_freeze(arm_of_leafpos),
        leafpos_of_arm=_freeze(leafpos_of_arm),
    )


def symmetric_tree(children: Sequence[int], ranges: Sequence[float]) -> SimilarityTree:
    """Build the symmetric shorthand: ``children[l]`` children per level-l node,
    all level-(l+1) classes sharing range ``ranges[l]``."""
    children = [int(c) for c in children]
    ranges = [float(r) for r in ranges]
    L = len(children)
    if L < 1:
        raise NoLeaves("symmetric spec needs at least one level")
    if len(ranges) != L:
        raise ValueError("need one range per level")
    if any(c < 1 for c in children):
        raise EmptyClass("children counts must be >= 1")
    if any(r < 0 for r in ranges):
        raise ValueError("ranges must be nonnegative")

    counts = [1]
    for c in children:
        counts.append(counts[-1] * c)
    n_nodes = sum(counts)
    level = np.concatenate([np.full(counts[l], l, dtype=np.int32) for l in range(L + 1)])
    range_ = np.concatenate(
        [np.zeros(1)] + [np.full(counts[l + 1], ranges[l]) for l in range(L)])
    parent = np.full(n_nodes, -1, dtype=np.int32)
    start = 1
    prev_start = 0
    for l in range(L):
        for j in range(counts[l + 1]):
            parent[start + j] = prev_start + j // children[l]
        prev_start = start
        start += counts[l + 1]
    return _assemble(L, level, parent, range_.astype(np.float64), None)


def tree_from_nodes(
    nodes: Sequence[dict],
    arms: Sequence[int] | None = None,
    range_convention: str = "per_class",
) -> SimilarityTree:
    """Build from an explicit node list ``[{"id", "level", "parent", "range"}, ...]``.

    Ids may be arbitrary; internal ids are reassigned breadth-first with
    children kept in spec order.  Under ``range_convention="per_parent"`` a
    node's ``range`` bounds its *children's* increments and is translated to
    the stored per-class convention (each child inherits the parent's value).
    """
    if range_convention not in ("per_class", "per_parent"):
        raise ValueError(f"unknown range convention {range_convention!r}")
    if not nodes:
        raise NoLeaves("empty node list")

    by_id: dict[int, dict] = {}
    order: dict[int, int] = {}
    for pos, node in enumerate(nodes):
        nid = int(node["id"])
        if nid in by_id:
            raise UnknownClass(f"duplicate node id {nid}")
        by_id[nid] = node
        order[nid] = pos

    roots = [nid for nid, nd in by_id.items() if nd.get("parent") is None]
    if len(roots) != 1:
        raise NonNestedPartition(f"expected exactly one root, found {len(roots)}")
    root_id = roots[0]
    if int(by_id[root_id]["level"]) != 0:
        raise NonNestedPartition("root must sit at level 0")

    children_of: dict[int, list[int]] = {nid: [] for nid in by_id}
    for nid, nd in by_id.items():
        if nid == root_id:
            continue
        pid = nd.get("parent")
        if pid not in by_id:
            raise UnknownClass(f"node {nid} names unknown parent {pid}")
        if int(nd["level"]) != int(by_id[pid]["level"]) + 1:
            raise NonNestedPartition(
                f"node {nid} at level {nd['level']} under parent at level "
                f"{by_id[pid]['level']}")
        children_of[pid].append(nid)
    for nid in children_of:
        children_of[nid].sort(key=order.__getitem__)

    bfs: list[int] = [root_id]
    head = 0
    while head < len(bfs):
        bfs.extend(children_of[bfs[head]])
        head += 1
    if len(bfs) != len(by_id):
        raise NonNestedPartition("some nodes are unreachable from the root")

    new_id = {nid: i for i, nid in enumerate(bfs)}
    n_nodes = len(bfs)
    level = np.array([int(by_id[nid]["level"]) for nid in bfs], dtype=np.int32)
    parent = np.array(
        [-1] + [new_id[by_id[nid]["parent"]] for nid in bfs[1:]], dtype=np.int32)
    L = int(level.max())
    if L < 1:
        raise NoLeaves("tree needs at least one level below the root")

    def spec_range(nid: int) -> float:
        r = by_id[nid].get("range")
        return 0.0 if r is None else float(r)

    range_ = np.zeros(n_nodes, dtype=np.float64)
    for nid in bfs[1:]:
        src = by_id[nid]["parent"] if range_convention == "per_parent" else nid
        range_[new_id[nid]] = spec_range(src)
    if (range_ < 0).any():
        raise ValueError("ranges must be nonnegative")

    arm_perm = None
    if arms is not None:
        leaf_ids = [nid for nid in bfs if int(by_id[nid]["level"]) == L]
        pos_of = {nid: i for i, nid in enumerate(leaf_ids)}
        unknown = [a for a in arms if a not in pos_of]
        if unknown:
            raise UnknownClass(f"arm list names non-leaf id {unknown[0]}")
        if len(arms) != len(leaf_ids):
            raise UnknownClass("arm list must cover every leaf exactly once")
        # arm_of_leafpos[pos] = arm index whose leaf sits at that position
        arm_perm = np.empty(len(leaf_ids), dtype=np.int32)
        for arm_idx, nid in enumerate(arms):
            arm_perm[pos_of[nid]] = arm_idx

    return _assemble(L, level, parent, range_, arm_perm)


def build_tree(spec: dict) -> SimilarityTree:
    """Build a tree from a JSON-shaped dict (symmetric shorthand or node list)."""
    if not isinstance(spec, dict) or not spec:
        raise NoLeaves("empty tree spec")
    if "symmetric" in spec:
        sym = spec["symmetric"]
        return symmetric_tree(sym["children"], sym["ranges"])
    if "nodes" in spec:
        tree = tree_from_nodes(
            spec["nodes"],
            arms=spec.get("arms"),
            range_convention=spec.get("range_convention", "per_class"),
        )
        if "levels" in spec and int(spec["levels"]) != tree.num_levels:
            raise NonNestedPartition(
                f"spec says {spec['levels']} levels, nodes give {tree.num_levels}")
        return tree
    raise NoLeaves("tree spec needs either 'symmetric' or 'nodes'")


def tree_to_dict(tree: SimilarityTree) -> dict:
    """Serialize with canonical breadth-first ids (round-trips to identical ids)."""
    nodes = []
    for v in range(tree.num_nodes):
        nodes.append({
            "id": v,
            "level": int(tree.level[v]),
            "parent": None if v == tree.root else int(tree.parent[v]),
            "range": None if v == tree.root else float(tree.range_[v]),
        })
    arms = [tree.leaf_of_arm(a) for a in range(tree.num_leaves)]
    return {"levels": tree.num_levels, "nodes": nodes, "arms": arms}


def load_tree(path: str) -> SimilarityTree:
    with open(path) as fh:
        return build_tree(json.load(fh))


def dump_tree(tree: SimilarityTree, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(tree_to_dict(tree), fh, indent=2)


def lineage(tree: SimilarityTree, class_id: int) -> list[int]:
    """Root-exclusive ancestor chain ending at ``class_id`` (empty for the root)."""
    tree._check_node(class_id)
    chain: list[int] = []
    v = int(class_id)
    while v != tree.root:
        chain.append(v)
        v = int(tree.parent[v])
    chain.reverse()
    return chain


def tree_constants(tree: SimilarityTree) -> TreeConstants:
    """Per-level class counts / RMS ranges, n_eff, and the price of affinity."""
    L = tree.num_levels
    m: list[int] = []
    sq_sums: list[float] = []
    r_bar: list[float] = []
    K: list[int] = []
    for lvl in range(1, L + 1):
        ids = tree.nodes_at_level(lvl)
        m.append(int(ids.size))
        s2 = float(np.sum(tree.range_[ids] ** 2))
        sq_sums.append(s2)
        r_bar.append(float(np.sqrt(s2 / ids.size)))
        parents = tree.nodes_at_level(lvl - 1)
        K.append(int(np.max(tree.child_ptr[parents + 1] - tree.child_ptr[parents])))
    # n_eff = (sum_l sqrt(s2_l))**2 expanded so single-level cases stay exact.
    n_eff = float(sum(sq_sums))
    roots = [float(np.sqrt(s)) for s in sq_sums]
    for i in range(L):
        for j in range(i + 1, L):
            n_eff += 2.0 * roots[i] * roots[j]
    rho = float(np.sqrt(tree.num_leaves / n_eff)) if n_eff > 0 else float("inf")
    return TreeConstants(m=tuple(m), r_bar=tuple(r_bar), n_eff=n_eff, rho=rho, K=tuple(K))


def random_tree(
    rng: np.random.Generator,
    max_levels: int = 4,
    max_children: int = 4,
    max_leaves: int = 200,
    min_levels: int = 1,
    allow_zero_ranges: bool = True,
) -> SimilarityTree:
    """Random valid tree for tests and the numeric verification battery.

    Shapes are irregular (per-node child counts vary, single-child classes
    allowed) and per-class ranges are rescaled so the worst path sums to a
    random value in (0, 1].
    """
    L = int(rng.integers(min_levels, max_levels + 1))
    level = [0]
    parent = [-1]
    frontier = [0]
    for lvl in range(1, L + 1):
        new_frontier = []
        for p in frontier:
            width = int(rng.integers(1, max_children + 1))
            if len(new_frontier) + width > max_leaves:
                width = 1
            for _ in range(width):
                level.append(lvl)
                parent.append(p)
                new_frontier.append(len(level) - 1)
        frontier = new_frontier
    n_nodes = len(level)
    range_ = rng.random(n_nodes)
    range_[0] = 0.0
    if allow_zero_ranges and L > 1 and rng.random() < 0.3:
        lvl = int(rng.integers(1, L + 1))
        kill = [v for v in range(n_nodes) if level[v] == lvl]
        range_[kill] = 0.0
    # Rescale so the worst root-to-leaf range sum lands in (0, 1].
    path_sum = np.zeros(n_nodes)
    for v in range(1, n_nodes):
        path_sum[v] = path_sum[parent[v]] + range_[v]
    worst = max(path_sum[v] for v in frontier)
    if worst > 0:
        range_ *= float(rng.uniform(0.3, 1.0)) / worst
    return _assemble(
        L,
        np.array(level, dtype=np.int32),
        np.array(parent, dtype=np.int32),
        np.ascontiguousarray(range_),
        None,
    )
