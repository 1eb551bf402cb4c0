"""Timing comparison of the numba and numpy simulation backends."""

from __future__ import annotations

import time
from dataclasses import dataclass

from . import backend
from .runner import ExperimentConfig, PolicySpec, run_experiment


def _bench_config(levels: int, children: int, horizon: int, seeds: int) -> ExperimentConfig:
    return ExperimentConfig(
        env={"kind": "symmetric_stochastic", "levels": levels,
             "children": children, "range_decay": 10.0, "beta": 0.25},
        policies=(PolicySpec(name="new", kind="new", mu=None, schedule=None),
                  PolicySpec(name="exp3", kind="exp3", mu=None, schedule=None)),
        horizon=horizon,
        seeds=tuple(range(seeds)),
        record_every=max(horizon // 50, 1),
    )


@dataclass(frozen=True)
class BackendTiming:
    name: str
    total_seconds: float
    runs: int

    @property
    def per_run_ms(self) -> float:
        return 1000.0 * self.total_seconds / self.runs


def run_benchmark(levels: int = 3, children: int = 3, horizon: int = 5000,
                  seeds: int = 4) -> list[BackendTiming]:
    """Time the same experiment under every available backend."""
    config = _bench_config(levels, children, horizon, seeds)
    names = ["numpy"]
    try:
        backend.set_backend("numba")
        run_experiment(_bench_config(levels, children, 50, 1))  # compile warmup
        names.insert(0, "numba")
    except Exception:
        pass

    timings = []
    runs = len(config.seeds) * len(config.policies)
    for name in names:
        backend.set_backend(name)
        started = time.perf_counter()
        run_experiment(config)
        timings.append(BackendTiming(
            name=name, total_seconds=time.perf_counter() - started, runs=runs))
    return timings


def format_benchmark(timings: list[BackendTiming]) -> str:
    lines = [f"{'backend':<8} {'total s':>10} {'per run ms':>12} {'speedup':>9}"]
    base = timings[-1].total_seconds  # numpy is listed last
    for t in timings:
        lines.append(f"{t.name:<8} {t.total_seconds:>10.3f} "
                     f"{t.per_run_ms:>12.2f} {base / t.total_seconds:>8.1f}x")
    return "\n".join(lines)
