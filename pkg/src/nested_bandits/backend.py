"""Backend selection for the simulation kernels.

Two interchangeable implementations of the per-run hot loops exist:
``numba`` (JIT-compiled, the default when importable) and ``numpy``
(pure-numpy fallback).  Selection order:

1. ``set_backend()`` calls (tests, benchmarks),
2. the ``NESTED_BANDITS_BACKEND`` environment variable (``numba``/``numpy``),
3. default: numba if it imports, else numpy.

Both backends produce the same trajectories up to floating-point rounding;
within one backend the flat-tree nested policy and EXP3 are bit-identical.
"""

from __future__ import annotations

import os

_VALID = ("numba", "numpy")
_active: str | None = None


def _resolve() -> str:
    requested = os.environ.get("NESTED_BANDITS_BACKEND", "").strip().lower()
    if requested and requested not in _VALID:
        raise ValueError(
            f"NESTED_BANDITS_BACKEND must be one of {_VALID}, got {requested!r}")
    if requested == "numpy":
        return "numpy"
    try:
        from . import _kernels_numba  # noqa: F401
        return "numba"
    except Exception:
        if requested == "numba":
            raise
        return "numpy"


def active_backend() -> str:
    global _active
    if _active is None:
        _active = _resolve()
    return _active


def set_backend(name: str) -> None:
    """Force a backend (mainly for tests and benchmarking)."""
    global _active
    if name not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}")
    if name == "numba":
        from . import _kernels_numba  # noqa: F401  (fail fast if unavailable)
    _active = name


def kernels():
    """The active kernel module (run_new / run_exp3)."""
    if active_backend() == "numba":
        from . import _kernels_numba
        return _kernels_numba
    from . import _kernels_numpy
    return _kernels_numpy
