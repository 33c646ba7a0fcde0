"""Benchmark problems: synthetic fronts, crash wrappers and the vehicle loop."""

from .problem import (NOMINAL_EVAL_SECONDS, NOMINAL_STEPS, Ball, BenchmarkProblem, Box,
                      region_from_dict, with_crash_region)
from .synthetic import (crash_dtlz2, crash_zdt1, dtlz2_values, synthetic_dtlz2_3obj,
                        synthetic_zdt1, zdt1_front, zdt1_values)
from .vehicle import (LATERAL_LIMIT, Track, TrajectoryLog, VehicleConfig, VehicleState,
                      WeightMapping, controller_step, crash_predicate, objective_j1,
                      objective_j2, objective_j3, simulate_vehicle, vehicle_problem)

__all__ = [
    "NOMINAL_EVAL_SECONDS",
    "NOMINAL_STEPS",
    "Ball",
    "BenchmarkProblem",
    "Box",
    "region_from_dict",
    "with_crash_region",
    "crash_dtlz2",
    "crash_zdt1",
    "dtlz2_values",
    "synthetic_dtlz2_3obj",
    "synthetic_zdt1",
    "zdt1_front",
    "zdt1_values",
    "LATERAL_LIMIT",
    "Track",
    "TrajectoryLog",
    "VehicleConfig",
    "VehicleState",
    "WeightMapping",
    "controller_step",
    "crash_predicate",
    "objective_j1",
    "objective_j2",
    "objective_j3",
    "simulate_vehicle",
    "vehicle_problem",
]
