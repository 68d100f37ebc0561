"""Zeroth-order solver: schedules, auxiliary sets, the update and full runs."""

from .algorithm import (
    AuxiliarySets,
    Draws,
    NumericalError,
    QuasiDraws,
    RunOptions,
    SolverState,
    Trajectory,
    auxiliary_sets,
    initial_state,
    quasi_gradient,
    record_indices,
    run,
    step,
    step_with_draws,
)
from .kernel import COMPILED
from .schedules import Schedule, burn_in, schedule_tau2, stepsizes, stepsizes_array

__all__ = [
    "AuxiliarySets",
    "Draws",
    "NumericalError",
    "QuasiDraws",
    "RunOptions",
    "SolverState",
    "Trajectory",
    "auxiliary_sets",
    "initial_state",
    "quasi_gradient",
    "record_indices",
    "run",
    "step",
    "step_with_draws",
    "COMPILED",
    "Schedule",
    "burn_in",
    "schedule_tau2",
    "stepsizes",
    "stepsizes_array",
]
