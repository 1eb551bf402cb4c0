"""Online policies: nested exponential weights and a flat EXP3 baseline.

Both maintain a cumulative score vector Y (the negative sum of all past cost
estimates) and play a softmax-type distribution of eta_t * Y.  The nested
policy samples top-down through the similarity tree and feeds the observed
on-path increments to the nested importance-weighted estimator, so one
observation updates every arm sharing the chosen classes; EXP3 touches only
the chosen arm.

choose() and feedback() must strictly alternate — the estimator divides by
the probabilities recorded at sampling time, and skipping a feedback (or
choosing twice) would desynchronize them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .choice import (
    SamplePath,
    ScoreState,
    UncertaintyParams,
    leaf_distribution,
    propagate_scores,
    sample_path,
    segment_softmax,
)
from .errors import PendingFeedback, StaleFeedback
from .estimators import niwe
from .tree import SimilarityTree, tree_constants


@dataclass(frozen=True)
class Schedule:
    """Learning-rate schedule eta_t, 1-based and nonincreasing.

    kinds: ``tuned_anytime`` (sqrt(log N / (2t))), ``constant``, ``table``.
    """

    kind: str
    value: float = 0.0
    num_arms: int = 0
    table: tuple[float, ...] = ()

    def __call__(self, t: int) -> float:
        if t < 1:
            raise ValueError("stages are 1-based")
        if self.kind == "tuned_anytime":
            return math.sqrt(math.log(self.num_arms) / (2.0 * t))
        if self.kind == "constant":
            return self.value
        if self.kind == "table":
            # past the end, keep the final rate (lets short tables run on)
            return self.table[min(t, len(self.table)) - 1]
        raise ValueError(f"unknown schedule kind {self.kind!r}")

    def as_array(self, horizon: int) -> np.ndarray:
        return np.array([self(t) for t in range(1, horizon + 1)])


def tuned_anytime_schedule(num_arms: int) -> Schedule:
    if num_arms < 2:
        raise ValueError("anytime tuning needs at least two arms")
    return Schedule(kind="tuned_anytime", num_arms=int(num_arms))


def constant_schedule(eta: float) -> Schedule:
    if eta <= 0:
        raise ValueError("learning rate must be positive")
    return Schedule(kind="constant", value=float(eta))


def table_schedule(values: Sequence[float]) -> Schedule:
    vals = tuple(float(v) for v in values)
    if not vals or any(v <= 0 for v in vals):
        raise ValueError("rates must be positive")
    if any(a < b for a, b in zip(vals, vals[1:])):
        raise ValueError("rates must be nonincreasing")
    return Schedule(kind="table", table=vals)


@dataclass(frozen=True)
class TunedParameters:
    """Theorem-matched tuning: equal temperatures sqrt(n_eff/2) and the
    anytime rate sqrt(log N / (2t)), with the guaranteed regret envelope."""

    mu: UncertaintyParams
    schedule: Schedule
    n_eff: float
    num_arms: int

    def bound(self, horizon: int) -> float:
        return 2.0 * math.sqrt(self.n_eff * math.log(self.num_arms) * horizon)


def tuned_parameters(tree: SimilarityTree) -> TunedParameters:
    consts = tree_constants(tree)
    if tree.num_leaves < 2:
        raise ValueError("tuning needs at least two arms")
    if consts.n_eff <= 0:
        raise ValueError("all ranges are zero; nothing to tune against")
    value = math.sqrt(consts.n_eff / 2.0)
    return TunedParameters(
        mu=UncertaintyParams.uniform(value, tree.num_levels),
        schedule=tuned_anytime_schedule(tree.num_leaves),
        n_eff=consts.n_eff,
        num_arms=tree.num_leaves,
    )


class NestedExpWeightsPolicy:
    """Nested exponential weights over a similarity tree.

    Each stage scales Y by the current rate, propagates scores bottom-up,
    samples an arm top-down, and on feedback subtracts the estimated dense
    cost vector from Y.
    """

    def __init__(
        self,
        tree: SimilarityTree,
        mu: UncertaintyParams | Sequence[float],
        schedule: Schedule | Callable[[int], float],
    ):
        self.tree = tree
        self.mu = mu if isinstance(mu, UncertaintyParams) else UncertaintyParams(tuple(mu))
        if len(self.mu.mu) != tree.num_levels:
            raise ValueError("one uncertainty parameter per level required")
        self.schedule = schedule
        self._Y = np.zeros(tree.num_leaves, dtype=np.float64)
        self._t = 1
        self._pending: SamplePath | None = None

    @property
    def t(self) -> int:
        return self._t

    @property
    def Y(self) -> np.ndarray:
        return self._Y.copy()

    @property
    def current_eta(self) -> float:
        return float(self.schedule(self._t))

    def _state(self) -> ScoreState:
        return propagate_scores(self.tree, self.mu, self.current_eta * self._Y)

    def strategy(self) -> np.ndarray:
        """Arm distribution the next choose() will sample from."""
        return leaf_distribution(self._state())

    def choose(self, rng: np.random.Generator) -> SamplePath:
        if self._pending is not None:
            raise PendingFeedback("feedback for the previous choice is still due")
        path = sample_path(self._state(), rng)
        self._pending = path
        return path

    def feedback(self, observed_increments: Sequence[float] | np.ndarray) -> None:
        """Consume the on-path increments of the immediately preceding choose()."""
        if self._pending is None:
            raise StaleFeedback("no pending choice")
        est = niwe(self.tree, self._pending, observed_increments)
        self._Y -= est.leaf_costs(self.tree)
        self._pending = None
        self._t += 1


class Exp3Policy:
    """Plain exponential weights over the arms with bandit feedback.

    ``temperature`` divides the scores exactly like the nested policy's
    level temperature, so on a one-level tree the two policies draw
    identical trajectories from identical seeds.
    """

    def __init__(
        self,
        num_arms: int,
        schedule: Schedule | Callable[[int], float],
        temperature: float = 1.0,
    ):
        if num_arms < 1:
            raise ValueError("need at least one arm")
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        self.num_arms = int(num_arms)
        self.schedule = schedule
        self.temperature = float(temperature)
        self._Y = np.zeros(self.num_arms, dtype=np.float64)
        self._t = 1
        self._pending: tuple[int, float] | None = None

    @property
    def t(self) -> int:
        return self._t

    @property
    def Y(self) -> np.ndarray:
        return self._Y.copy()

    @property
    def current_eta(self) -> float:
        return float(self.schedule(self._t))

    def strategy(self) -> np.ndarray:
        scaled = self.current_eta * self._Y
        return segment_softmax(scaled, np.zeros(1, dtype=np.int64), self.temperature)

    def choose(self, rng: np.random.Generator) -> int:
        if self._pending is not None:
            raise PendingFeedback("feedback for the previous choice is still due")
        probs = self.strategy()
        u = rng.random()
        arm = int(np.searchsorted(np.cumsum(probs), u, side="right"))
        arm = min(arm, self.num_arms - 1)
        self._pending = (arm, float(probs[arm]))
        return arm

    def feedback(self, cost: float) -> None:
        """Consume the realized cost of the arm just chosen."""
        if self._pending is None:
            raise StaleFeedback("no pending choice")
        arm, prob = self._pending
        self._Y[arm] -= float(cost) / prob
        self._pending = None
        self._t += 1
