"""Latency-aware metro network slicing over a disaggregated optical core.

The package models the full slice lifecycle at desk scale: compute
placement against round-trip-time bounds, media channel and transponder
bring-up on a flexgrid line system, packet-train commissioning of the
resulting circuit, and soft-failure monitoring of its optical quality.
Everything runs deterministically from a scenario file; a live UDP mode
exists for measuring real reflectors.
"""

from __future__ import annotations

from .config import Scenario, build_world, default_scenario_path, load_scenario
from .orchestrator import derive_kpis, merge_logs, run_wf1, run_wf2

__version__ = "1.0.0"

__all__ = [
    "Scenario",
    "build_world",
    "default_scenario_path",
    "derive_kpis",
    "load_scenario",
    "merge_logs",
    "run_wf1",
    "run_wf2",
    "__version__",
]
