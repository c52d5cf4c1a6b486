"""Exponential-stability certificates for linear time-delay systems.

Weighted integral inequalities feed LMI conditions that are solved as
semidefinite programs; search drivers turn them into decay rates and delay
bounds, and a fixed-step integrator checks the results in simulation.
"""
from .lmi import build_corollary41, build_theorem41, build_theorem42
from .sdp import FeasibilityResult, SolverSettings, Verdict, check_feasible
from .search import feasible_delay_interval, max_decay_rate, max_upper_delay
from .systems import ConstantDelaySystem, DelaySpec, IntervalDelaySystem, quarter_car_closed_loop
from .wii import WiiCoefficients, build_coefficients

__version__ = "0.1.0"

__all__ = [
    "ConstantDelaySystem",
    "IntervalDelaySystem",
    "DelaySpec",
    "quarter_car_closed_loop",
    "WiiCoefficients",
    "build_coefficients",
    "build_theorem41",
    "build_theorem42",
    "build_corollary41",
    "check_feasible",
    "SolverSettings",
    "FeasibilityResult",
    "Verdict",
    "max_decay_rate",
    "max_upper_delay",
    "feasible_delay_interval",
]
