"""Trajectory planning on Gaussian cost surfaces with composite Bernstein polynomials."""

from .bench import (
    Scenario,
    TrialRow,
    canned_field,
    canned_scenario,
    emit_report,
    run_trial_set,
    sample_boundary_pair,
    warmstart_experiment,
)
from .bernstein import SegmentGrid, ThetaVector, Trajectory, sample_trajectory, straight_line_theta, theta_expand
from .problems import (
    ConfigurationError,
    NLPInstance,
    OCPSpec,
    Variant,
    build_nlp,
    decode_solution,
    discrete_cost,
    geodesic_residual,
    initial_guess,
    warmstart_guess,
)
from .solver import SolveReport, SolverOptions, Status, check_gradients, gradient, solve
from .surface import GaussianField, Obstacle, clearance_threshold, field_value

__version__ = "0.1.0"
