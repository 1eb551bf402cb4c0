"""Loss environments: per-round idiosyncratic increments for every class.

Each round the environment emits one increment per class (levels 1..L),
each within its class's range; a leaf's cost is the sum of the increments
along its lineage.  Stochastic environments draw increments uniformly
around per-class means with a bandwidth fraction ``beta`` of the range
(support clipped into [0, R_C]); scripted environments replay a table.

Step draws consume exactly one uniform per class per round, in node-id
order, so sequences are reproducible and identical whether generated
step-by-step or as a whole table.
"""

from __future__ import annotations

import csv
from typing import Sequence

import numpy as np

from .errors import RangeViolationInScript, ScriptExhausted
from .tree import SimilarityTree, symmetric_tree, tree_from_nodes

INCREMENT_TOL = 1e-12


def validate_increments(tree: SimilarityTree, delta: np.ndarray) -> None:
    """Assert one valid increment per class: 0 <= delta_C <= R_C."""
    delta = np.asarray(delta)
    if delta.shape != (tree.num_nodes,):
        raise ValueError("increments must be indexed by node id")
    if delta[tree.root] != 0.0:
        raise ValueError("the root carries no increment")
    if np.any(delta < -INCREMENT_TOL) or np.any(delta > tree.range_ + INCREMENT_TOL):
        raise ValueError("increment outside [0, R_C]")


def leaf_costs(tree: SimilarityTree, delta: np.ndarray) -> np.ndarray:
    """Arm-indexed costs: each leaf sums the increments along its lineage."""
    delta = np.asarray(delta, dtype=np.float64)
    acc = np.zeros(tree.num_leaves)
    for v in range(1, tree.num_nodes):
        d = delta[v]
        if d != 0.0:
            acc[tree.leaf_lo[v]:tree.leaf_hi[v]] += d
    out = np.empty(tree.num_leaves)
    out[tree.arm_of_leafpos] = acc
    return out


def leaf_cost_table(tree: SimilarityTree, table: np.ndarray) -> np.ndarray:
    """Leaf costs for a whole (T, num_nodes) increment table, arm-indexed columns."""
    table = np.asarray(table, dtype=np.float64)
    acc = np.zeros((table.shape[0], tree.num_leaves))
    for v in range(1, tree.num_nodes):
        acc[:, tree.leaf_lo[v]:tree.leaf_hi[v]] += table[:, v:v + 1]
    out = np.empty_like(acc)
    out[:, tree.arm_of_leafpos] = acc
    return out


class UniformIncrementEnv:
    """Increments drawn uniformly on [max(0, m-b), min(R, m+b)] per class.

    ``means`` is a per-node vector of target means m_C; the bandwidth is
    ``beta * R_C``.  Zero-width supports (incl. every zero-range class) yield
    constant increments.  The reported oracle mean is the true mean of the
    clipped support, (lo + hi) / 2.
    """

    def __init__(self, tree: SimilarityTree, means: np.ndarray, beta: float):
        if not 0.0 <= beta <= 1.0:
            raise ValueError("bandwidth fraction must be in [0, 1]")
        means = np.asarray(means, dtype=np.float64)
        if means.shape != (tree.num_nodes,):
            raise ValueError("means must be indexed by node id")
        if np.any(means < 0) or np.any(means > tree.range_):
            raise ValueError("means must respect each class range")
        self.tree = tree
        self.beta = float(beta)
        band = beta * tree.range_
        self._lo = np.maximum(0.0, means - band)
        self._hi = np.minimum(tree.range_, means + band)
        self._lo[tree.root] = self._hi[tree.root] = 0.0
        self.mean_increments = (self._lo + self._hi) / 2.0
        self.num_rounds: int | None = None

    @property
    def has_oracle(self) -> bool:
        return True

    def oracle_mean_leaf_costs(self) -> np.ndarray:
        return leaf_costs(self.tree, self.mean_increments)

    def oracle_best_arm(self) -> int:
        return int(np.argmin(self.oracle_mean_leaf_costs()))

    def step(self, t: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(self.tree.num_nodes - 1)
        delta = np.zeros(self.tree.num_nodes)
        delta[1:] = self._lo[1:] + u * (self._hi[1:] - self._lo[1:])
        return delta

    def increment_table(self, horizon: int, rng: np.random.Generator) -> np.ndarray:
        """(T, num_nodes) table; consumes the stream exactly like T step() calls."""
        u = rng.random((horizon, self.tree.num_nodes - 1))
        table = np.zeros((horizon, self.tree.num_nodes))
        table[:, 1:] = self._lo[1:] + u * (self._hi[1:] - self._lo[1:])
        return table


class StochasticTreeEnv(UniformIncrementEnv):
    """Uniform increments around per-class means drawn once at construction,
    m_C ~ U[0, R_C] (one uniform per class, node-id order)."""

    def __init__(self, tree: SimilarityTree, beta: float = 0.25,
                 rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng()
        means = np.zeros(tree.num_nodes)
        means[1:] = rng.random(tree.num_nodes - 1) * tree.range_[1:]
        super().__init__(tree, means, beta)


def red_blue_bus_tree(num_colors: int = 2) -> SimilarityTree:
    """Type-then-color structure: a bus class with ``num_colors`` colors and a
    single-child car class; color-level ranges are zero."""
    if num_colors < 1:
        raise ValueError("need at least one bus color")
    nodes = [
        {"id": 0, "level": 0, "parent": None},
        {"id": 1, "level": 1, "parent": 0, "range": 1.0},
        {"id": 2, "level": 1, "parent": 0, "range": 1.0},
    ]
    nid = 3
    for _ in range(num_colors):
        nodes.append({"id": nid, "level": 2, "parent": 1, "range": 0.0})
        nid += 1
    nodes.append({"id": nid, "level": 2, "parent": 2, "range": 0.0})
    return tree_from_nodes(nodes)


class RedBlueBusEnv(UniformIncrementEnv):
    """Irrelevant-alternatives testbed: color never moves the cost, only the
    type does.  Arms: colors 0..K-1, then the car."""

    def __init__(self, num_colors: int = 2, mean_bus: float = 0.75,
                 mean_car: float = 0.25, beta: float = 0.25):
        tree = red_blue_bus_tree(num_colors)
        means = np.zeros(tree.num_nodes)
        means[1] = mean_bus
        means[2] = mean_car
        super().__init__(tree, means, beta)
        self.num_colors = num_colors


class AdversarialScriptEnv:
    """Replays an explicit (T, num_nodes) increment table verbatim."""

    def __init__(self, tree: SimilarityTree, table: np.ndarray):
        table = np.asarray(table, dtype=np.float64)
        if table.ndim != 2 or table.shape[1] != tree.num_nodes:
            raise ValueError("table must be (rounds, num_nodes)")
        if np.any(table < -INCREMENT_TOL) or np.any(table > tree.range_ + INCREMENT_TOL):
            raise RangeViolationInScript("scripted increment outside [0, R_C]")
        if np.any(table[:, tree.root] != 0.0):
            raise RangeViolationInScript("the root carries no increment")
        self.tree = tree
        self.table = table
        self.num_rounds = int(table.shape[0])
        self.mean_increments = None

    @property
    def has_oracle(self) -> bool:
        return False

    def step(self, t: int, rng: np.random.Generator | None = None) -> np.ndarray:
        if not 1 <= t <= self.num_rounds:
            raise ScriptExhausted(f"round {t} outside the scripted horizon "
                                  f"{self.num_rounds}")
        return self.table[t - 1].copy()

    def increment_table(self, horizon: int,
                        rng: np.random.Generator | None = None) -> np.ndarray:
        if horizon > self.num_rounds:
            raise ScriptExhausted(
                f"horizon {horizon} exceeds the scripted {self.num_rounds} rounds")
        return self.table[:horizon].copy()

    @classmethod
    def from_csv(cls, tree: SimilarityTree, path: str) -> "AdversarialScriptEnv":
        """Load ``t,class_id,delta`` rows (1-based t, missing entries are 0)."""
        entries: list[tuple[int, int, float]] = []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            required = {"t", "class_id", "delta"}
            if reader.fieldnames is None or not required.issubset(reader.fieldnames):
                raise RangeViolationInScript(
                    f"script must carry columns {sorted(required)}")
            for row in reader:
                entries.append((int(row["t"]), int(row["class_id"]), float(row["delta"])))
        if not entries:
            raise RangeViolationInScript("empty script")
        horizon = max(t for t, _, _ in entries)
        table = np.zeros((horizon, tree.num_nodes))
        for t, cid, d in entries:
            if t < 1:
                raise RangeViolationInScript("rounds are 1-based")
            if not 0 <= cid < tree.num_nodes:
                raise RangeViolationInScript(f"unknown class id {cid}")
            table[t - 1, cid] = d
        return cls(tree, table)


def geometric_ranges(num_levels: int, range_decay: float) -> list[float]:
    """Per-level ranges decaying by ``range_decay`` per level, summing to 1."""
    if range_decay <= 1.0:
        raise ValueError("range decay ratio must exceed 1")
    raw = np.array([range_decay ** -(l - 1) for l in range(1, num_levels + 1)])
    return (raw / raw.sum()).tolist()


def make_symmetric_env(
    num_levels: int,
    children_per_level: int | Sequence[int],
    range_decay: float = 10.0,
    beta: float = 0.25,
    rng: np.random.Generator | None = None,
) -> tuple[SimilarityTree, StochasticTreeEnv]:
    """Symmetric tree with geometrically decaying per-level ranges summing to 1,
    paired with a stochastic environment on it."""
    if num_levels < 1:
        raise ValueError("need at least one level")
    if np.isscalar(children_per_level):
        widths = [int(children_per_level)] * num_levels
    else:
        widths = [int(c) for c in children_per_level]
        if len(widths) != num_levels:
            raise ValueError("one child count per level required")
    if any(w < 2 for w in widths):
        raise ValueError("need at least two children per class")
    ranges = [1.0] if num_levels == 1 else geometric_ranges(num_levels, range_decay)
    tree = symmetric_tree(widths, ranges)
    env = StochasticTreeEnv(tree, beta=beta, rng=rng)
    return tree, env
