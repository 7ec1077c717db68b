"""Conical Kahler-Ricci flow on rotationally symmetric P^1 and P^1 x P^1 models.

The flow of cone metrics is approximated by smooth twisted flows indexed by
eps; each is integrated as a parabolic Monge-Ampere equation for a
potential and monitored against the estimate chain that controls the
scalar curvature near a finite-time singularity.
"""

from __future__ import annotations

from .geometry import FactorGeometry, Scenario, build_factor, scalar_curvature
from .monitors import BoundReport, MonitorSample, check_bounds, fit_blowup_exponent
from .regularization import chi, k_max, rho_eps
from .schedule import ClassSchedule, build_schedule, compute_T
from .solver import FlowProblem, FlowState, StopPolicy, make_problem, run, step

__version__ = "0.1.0"

__all__ = [
    "BoundReport",
    "ClassSchedule",
    "FactorGeometry",
    "FlowProblem",
    "FlowState",
    "MonitorSample",
    "Scenario",
    "StopPolicy",
    "build_factor",
    "build_schedule",
    "check_bounds",
    "chi",
    "compute_T",
    "fit_blowup_exponent",
    "k_max",
    "make_problem",
    "rho_eps",
    "run",
    "scalar_curvature",
    "step",
]
