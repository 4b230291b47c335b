"""Python interface to the benchforge orchestration core."""

from ._core import (
    Archive,
    BenchforgeError,
    analyze_archive,
    demo,
    expand_combinations,
    resolve_config,
    run_pipeline,
    stdp_update,
)

__all__ = [
    "Archive",
    "BenchforgeError",
    "analyze_archive",
    "demo",
    "expand_combinations",
    "resolve_config",
    "run_pipeline",
    "stdp_update",
]
