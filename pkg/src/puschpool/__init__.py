"""Cycle-approximate many-core cluster model with bit-exact 5G PUSCH kernels."""

from .cluster import PRESETS, ClusterTopology, get_topology
from .engine import CycleStats, EngineConfig, run
from .pipeline import UseCaseConfig, kernel_macs, run_golden, run_simulated, stage_breakdown
from .report import VERSION as __version__

__all__ = ["ClusterTopology", "PRESETS", "get_topology", "CycleStats", "EngineConfig", "run",
           "UseCaseConfig", "kernel_macs", "stage_breakdown", "run_golden", "run_simulated",
           "__version__"]
