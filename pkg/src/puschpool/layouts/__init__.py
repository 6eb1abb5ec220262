"""Conflict-avoiding data placements and core schedules, plus their verifier."""

from .cholesky import cholesky_capacity, cholesky_layout, element_counts, owned_rows
from .fft import (fft_cores_per_instance, fft_fold_layout, fft_replicated_layout,
                  fft_replication, fft_unfolded_layout)
from .local import che_layout, mimo_layout, ne_layout, split_even
from .mmm import mmm_schedule, window_assignment
from .plan import (LayoutPlan, LocalityReport, ReplicationPlan, SyncPoint, Task, merge_plans,
                   serial_plan, verify_conflict_free)

__all__ = [
    "cholesky_capacity", "cholesky_layout", "element_counts", "owned_rows",
    "fft_cores_per_instance", "fft_fold_layout", "fft_replicated_layout", "fft_replication",
    "fft_unfolded_layout", "che_layout", "mimo_layout", "ne_layout", "split_even",
    "mmm_schedule", "window_assignment", "LayoutPlan", "LocalityReport", "ReplicationPlan",
    "SyncPoint", "Task", "merge_plans", "serial_plan", "verify_conflict_free",
]
