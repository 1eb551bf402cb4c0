"""Experiment orchestration: seeded multi-run execution and persistence.

A config names a tree, an environment, a list of policies, a horizon, and
seeds.  Per seed, one increment table is generated from the environment
stream and shared by every policy (all policies face the same losses), while
a separate policy stream supplies the sampling uniforms — identical across
policies so paired comparisons are exact.  Stream derivation:
``default_rng(SeedSequence([seed, 0]))`` for the environment and
``default_rng(SeedSequence([seed, 1]))`` for the policies.

Regret accounting: the expected column is the strategy's mean cost against a
fixed comparator arm (the oracle best arm for stochastic environments, the
hindsight-best arm on the realized table for scripted ones); the realized
column replaces the strategy mean by the sampled arm's realized cost.
Average reward is 1 - (cumulative realized cost) / t.

Outputs: ``trajectories.csv`` with header
``run_id,policy,seed,t,regret_expected,regret_realized,avg_reward,arm`` and
``summary.json`` mapping each policy to final-regret statistics.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .backend import kernels
from .choice import UncertaintyParams
from .envs import (
    AdversarialScriptEnv,
    RedBlueBusEnv,
    StochasticTreeEnv,
    UniformIncrementEnv,
    geometric_ranges,
    leaf_cost_table,
)
from .errors import ConfigError
from .policies import (
    Schedule,
    constant_schedule,
    table_schedule,
    tuned_anytime_schedule,
    tuned_parameters,
)
from .tree import SimilarityTree, build_tree, symmetric_tree

CSV_HEADER = "run_id,policy,seed,t,regret_expected,regret_realized,avg_reward,arm"

ENV_STREAM = 0
POLICY_STREAM = 1


def env_stream(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), ENV_STREAM]))


def policy_stream(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), POLICY_STREAM]))


@dataclass(frozen=True)
class PolicySpec:
    name: str
    kind: str                      # "new" | "exp3"
    mu: tuple[float, ...] | None   # None: theorem tuning (new only)
    schedule: Schedule | None      # None: tuned anytime
    temperature: float = 1.0       # exp3 only

    @property
    def is_tuned_new(self) -> bool:
        return self.kind == "new" and self.mu is None and (
            self.schedule is None or self.schedule.kind == "tuned_anytime")


@dataclass(frozen=True)
class ExperimentConfig:
    env: dict
    policies: tuple[PolicySpec, ...]
    horizon: int
    seeds: tuple[int, ...]
    tree: dict | None = None
    out_dir: str | None = None
    record_every: int = 1
    bound_check: bool = False

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if self.record_every < 1:
            raise ConfigError("record_every must be >= 1")
        names = [p.name for p in self.policies]
        if len(set(names)) != len(names):
            raise ConfigError("policy names must be unique")
        if not self.policies:
            raise ConfigError("need at least one policy")


def _parse_schedule(spec) -> Schedule | None:
    if spec is None or spec == "tuned_anytime":
        return None
    if isinstance(spec, dict):
        kind = spec.get("kind")
        if kind == "tuned_anytime":
            return None
        if kind == "constant":
            return constant_schedule(float(spec["value"]))
        if kind == "table":
            return table_schedule(spec["values"])
    raise ConfigError(f"bad learning_rate spec: {spec!r}")


def _parse_policy(spec: dict) -> PolicySpec:
    kind = spec.get("kind", "").lower()
    if kind not in ("new", "exp3"):
        raise ConfigError(f"policy kind must be 'new' or 'exp3', got {kind!r}")
    mu = spec.get("mu", "tuned")
    if mu == "tuned" or mu is None:
        mu_val = None
    elif isinstance(mu, (int, float)):
        mu_val = (float(mu),)
    else:
        mu_val = tuple(float(v) for v in mu)
    return PolicySpec(
        name=spec.get("name", kind),
        kind=kind,
        mu=mu_val,
        schedule=_parse_schedule(spec.get("learning_rate")),
        temperature=float(spec.get("temperature", 1.0)),
    )


def config_from_dict(raw: dict) -> ExperimentConfig:
    try:
        seeds_raw = raw["seeds"]
        if isinstance(seeds_raw, dict):
            base = int(seeds_raw["base_seed"])
            seeds = tuple(range(base, base + int(seeds_raw["num_seeds"])))
        else:
            seeds = tuple(int(s) for s in seeds_raw)
        return ExperimentConfig(
            env=dict(raw["env"]),
            policies=tuple(_parse_policy(p) for p in raw["policies"]),
            horizon=int(raw["horizon"]),
            seeds=seeds,
            tree=raw.get("tree"),
            out_dir=raw.get("out_dir"),
            record_every=int(raw.get("record_every", 1)),
            bound_check=bool(raw.get("bound_check", False)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad experiment config: {exc}") from exc


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(raw)


def build_experiment_tree(config: ExperimentConfig) -> SimilarityTree:
    """The tree is defined by the env for self-contained kinds, otherwise by
    the config's tree spec."""
    kind = config.env.get("kind")
    if kind == "symmetric_stochastic":
        L = int(config.env["levels"])
        children = config.env["children"]
        widths = [int(children)] * L if np.isscalar(children) else [int(c) for c in children]
        if L == 1:
            ranges = [1.0]
        else:
            ranges = geometric_ranges(L, float(config.env.get("range_decay", 10.0)))
        return symmetric_tree(widths, ranges)
    if kind == "red_blue_bus":
        return RedBlueBusEnv(
            num_colors=int(config.env.get("num_colors", 2))).tree
    if config.tree is None:
        raise ConfigError(f"env kind {kind!r} needs an explicit tree spec")
    return build_tree(config.tree)


def make_env(config: ExperimentConfig, tree: SimilarityTree,
             rng: np.random.Generator):
    spec = config.env
    kind = spec.get("kind")
    beta = float(spec.get("beta", 0.25))
    if kind in ("stochastic", "symmetric_stochastic"):
        return StochasticTreeEnv(tree, beta=beta, rng=rng)
    if kind == "red_blue_bus":
        return RedBlueBusEnv(
            num_colors=int(spec.get("num_colors", 2)),
            mean_bus=float(spec.get("mean_bus", 0.75)),
            mean_car=float(spec.get("mean_car", 0.25)),
            beta=beta,
        )
    if kind == "scripted":
        return AdversarialScriptEnv.from_csv(tree, spec["path"])
    raise ConfigError(f"unknown env kind {kind!r}")


@dataclass(frozen=True)
class RunRecord:
    """Recorded trajectory of one (policy, seed) run."""

    run_id: str
    policy: str
    seed: int
    ts: np.ndarray
    regret_expected: np.ndarray
    regret_realized: np.ndarray
    avg_reward: np.ndarray
    arms: np.ndarray
    final_regret_expected: float
    final_regret_realized: float
    wall_time: float


@dataclass(frozen=True)
class BoundCheck:
    """Soft per-config check of the tuned policy's theoretical envelope."""

    policy: str
    bound_at_horizon: float
    mean_final_regret: float
    violations: tuple[tuple[int, float, float], ...]  # (t, mean regret, bound)

    @property
    def ok(self) -> bool:
        return not self.violations


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    tree: SimilarityTree
    records: list[RunRecord]
    summary: dict
    bound_checks: list[BoundCheck] = field(default_factory=list)

    def records_for(self, policy: str) -> list[RunRecord]:
        return [r for r in self.records if r.policy == policy]

    def trajectories_csv(self) -> str:
        lines = [CSV_HEADER]
        for r in self.records:
            for i, t in enumerate(r.ts):
                lines.append(
                    f"{r.run_id},{r.policy},{r.seed},{int(t)},"
                    f"{r.regret_expected[i]!r},{r.regret_realized[i]!r},"
                    f"{r.avg_reward[i]!r},{int(r.arms[i])}")
        return "\n".join(lines) + "\n"

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "trajectories.csv").write_text(self.trajectories_csv())
        (out / "summary.json").write_text(json.dumps(self.summary, indent=2) + "\n")


def _stats(values: np.ndarray) -> dict:
    values = np.asarray(values, dtype=np.float64)
    std = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    return {
        "mean": float(np.mean(values)),
        "std": std,
        "q25": float(np.percentile(values, 25)),
        "median": float(np.percentile(values, 50)),
        "q75": float(np.percentile(values, 75)),
        "min": float(np.min(values)),
        "max": float(np.max(values)),
    }


def summarize(records: Sequence[RunRecord]) -> dict:
    """Per-policy final-regret statistics, keyed for the summary JSON."""
    if not records:
        raise ValueError("no records to summarize")
    policies: dict[str, list[float]] = {}
    for r in records:
        policies.setdefault(r.policy, []).append(r.final_regret_expected)
    return {name: {"final_regret": _stats(np.array(vals))}
            for name, vals in policies.items()}


def _tree_arrays(tree: SimilarityTree) -> tuple:
    return (tree.parent, tree.child_ptr, tree.level_start, tree.leaf_lo,
            tree.leaf_hi, tree.node_of_leafpos, tree.arm_of_leafpos)


def _resolve_policy(spec: PolicySpec, tree: SimilarityTree):
    """Concrete (mu_levels, schedule) for a policy on this tree."""
    if spec.kind == "new":
        if spec.mu is None or spec.schedule is None:
            tuned = tuned_parameters(tree)
        if spec.mu is None:
            mu = tuned.mu
        else:
            mu = UncertaintyParams(
                spec.mu * tree.num_levels if len(spec.mu) == 1 else spec.mu)
        schedule = spec.schedule if spec.schedule is not None else tuned.schedule
        mu_levels = np.concatenate([[1.0], np.asarray(mu.mu)])
        return mu_levels, schedule
    schedule = spec.schedule
    if schedule is None:
        schedule = tuned_anytime_schedule(tree.num_leaves)
    return None, schedule


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Execute every (policy, seed) pair and collect records and summaries."""
    tree = build_experiment_tree(config)
    T = config.horizon
    k = kernels()
    arrays = _tree_arrays(tree)
    rec_mask = np.zeros(T, dtype=bool)
    rec_mask[config.record_every - 1::config.record_every] = True
    rec_mask[T - 1] = True
    ts = np.nonzero(rec_mask)[0] + 1

    resolved = {spec.name: _resolve_policy(spec, tree) for spec in config.policies}
    records: list[RunRecord] = []
    for seed in config.seeds:
        erng = env_stream(seed)
        env = make_env(config, tree, erng)
        delta = env.increment_table(T, erng)
        cost_arm = leaf_cost_table(tree, delta)
        cost_pos = np.ascontiguousarray(cost_arm[:, tree.arm_of_leafpos])
        if env.has_oracle:
            cbar_vec = env.oracle_mean_leaf_costs()
            best = int(np.argmin(cbar_vec))
            cbar_arm = np.ascontiguousarray(np.broadcast_to(cbar_vec, (T, tree.num_leaves)))
            comp_expected = np.full(T, cbar_vec[best])
            comp_realized = np.ascontiguousarray(cost_arm[:, best])
        else:
            best = int(np.argmin(cost_arm.sum(axis=0)))
            cbar_arm = cost_arm
            comp_expected = np.ascontiguousarray(cost_arm[:, best])
            comp_realized = comp_expected
        cbar_pos = np.ascontiguousarray(cbar_arm[:, tree.arm_of_leafpos])

        for spec in config.policies:
            prng = policy_stream(seed)
            mu_levels, schedule = resolved[spec.name]
            eta = schedule.as_array(T)
            started = time.perf_counter()
            if spec.kind == "new":
                uniforms = prng.random((T, tree.num_levels))
                arms, reg_e, reg_r, avg_r, _ = k.run_new(
                    *arrays, mu_levels, eta, uniforms, delta, cost_pos,
                    cbar_pos, comp_expected, comp_realized)
            else:
                uniforms = prng.random(T)
                arms, reg_e, reg_r, avg_r, _ = k.run_exp3(
                    eta, uniforms, spec.temperature, cost_arm, cbar_arm,
                    comp_expected, comp_realized)
            elapsed = time.perf_counter() - started
            records.append(RunRecord(
                run_id=f"{spec.name}-s{seed}",
                policy=spec.name,
                seed=seed,
                ts=ts,
                regret_expected=reg_e[rec_mask].copy(),
                regret_realized=reg_r[rec_mask].copy(),
                avg_reward=avg_r[rec_mask].copy(),
                arms=arms[rec_mask].copy(),
                final_regret_expected=float(reg_e[-1]),
                final_regret_realized=float(reg_r[-1]),
                wall_time=elapsed,
            ))

    result = ExperimentResult(
        config=config,
        tree=tree,
        records=records,
        summary=summarize(records),
    )
    if config.bound_check:
        result.bound_checks = _bound_checks(config, tree, records)
    if config.out_dir:
        result.write(config.out_dir)
    return result


def _bound_checks(config: ExperimentConfig, tree: SimilarityTree,
                  records: Sequence[RunRecord]) -> list[BoundCheck]:
    """Seed-averaged expected regret of tuned nested policies vs the
    theoretical envelope at every recorded stage (soft check)."""
    checks = []
    for spec in config.policies:
        if not spec.is_tuned_new:
            continue
        runs = [r for r in records if r.policy == spec.name]
        if not runs:
            continue
        tuned = tuned_parameters(tree)
        ts = runs[0].ts
        mean_regret = np.mean([r.regret_expected for r in runs], axis=0)
        bounds = np.array([tuned.bound(int(t)) for t in ts])
        bad = [(int(t), float(m), float(b))
               for t, m, b in zip(ts, mean_regret, bounds) if m > b]
        checks.append(BoundCheck(
            policy=spec.name,
            bound_at_horizon=float(bounds[-1]),
            mean_final_regret=float(mean_regret[-1]),
            violations=tuple(bad),
        ))
    return checks
