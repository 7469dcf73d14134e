"""Grid-based dynamic-programming solvers and feedback extraction."""

from blochkit.hjb.ball import (
    closed_loop_cost,
    feedback_rn,
    solve_risk_neutral,
    solve_risk_sensitive,
    value_at,
)
from blochkit.hjb.graph_oracle import graph_minimum_time
from blochkit.hjb.grids import BallGrid, FeedbackLaw, PolarGrid, ValueFunction, polar_to_sphere, sphere_to_polar
from blochkit.hjb.qvi import default_impulse_angles, qvi_residuals, solve_qvi
from blochkit.hjb.time_optimal import (
    extract_bang_bang,
    interpolate_value,
    rollout_bang_bang,
    solve_time_optimal,
    time_optimal_residual,
)

__all__ = [
    "BallGrid",
    "FeedbackLaw",
    "PolarGrid",
    "ValueFunction",
    "closed_loop_cost",
    "default_impulse_angles",
    "dpe_residual",
    "extract_bang_bang",
    "feedback_rn",
    "graph_minimum_time",
    "interpolate_value",
    "polar_to_sphere",
    "qvi_residuals",
    "rollout_bang_bang",
    "solve_qvi",
    "solve_risk_neutral",
    "solve_risk_sensitive",
    "solve_time_optimal",
    "sphere_to_polar",
    "time_optimal_residual",
    "value_at",
]


def dpe_residual(value: ValueFunction, problem: str) -> dict:
    """Discrete dynamic-programming residual report for a solved value.

    problem 'time_optimal' reports max/mean absolute residual of the
    stationary equation; 'qvi' reports branch and complementarity
    residuals.
    """
    if problem == "time_optimal":
        return time_optimal_residual(value)
    if problem == "qvi":
        return qvi_residuals(value)
    raise ValueError(f"no residual evaluator for problem {problem!r}")
