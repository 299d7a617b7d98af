"""Exact event-driven simulation of the multiclass queue."""
from .core import (
    POLICIES,
    Policy,
    path_costs,
    simulate,
    simulate_nonpreemptive,
    simulate_preemptive,
    simulate_static_priority,
)
from .streams import Primitives, RenewalStream, draw_primitives, stream_rng
from .trajectory import (
    ScaledTrajectory,
    Trajectory,
    collapse_gap,
    scale_trajectory,
    systeq_residual,
    workload_check,
)

__all__ = [
    "POLICIES",
    "Policy",
    "Primitives",
    "RenewalStream",
    "ScaledTrajectory",
    "Trajectory",
    "collapse_gap",
    "draw_primitives",
    "path_costs",
    "scale_trajectory",
    "simulate",
    "simulate_nonpreemptive",
    "simulate_preemptive",
    "simulate_static_priority",
    "stream_rng",
    "systeq_residual",
    "workload_check",
]
