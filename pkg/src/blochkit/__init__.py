"""Toolkit for a controlled two-level open quantum system.

Covers dense 2x2/4x4 operator algebra, coupling-parameter network
composition, hybrid continuous/impulsive Bloch dynamics, stochastic
filtering from homodyne records, grid-based dynamic-programming
controller synthesis, and a direct-coupling two-qubit feedback demo.
"""

from blochkit.algebra import (
    SIGMA_0,
    SIGMA_MINUS,
    SIGMA_PLUS,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    SpectralDecomposition,
    bloch_from_density,
    density_from_bloch,
    lindblad_dissipator,
    measurement_probabilities,
    partial_trace,
    project_postulate,
    spectral_decompose,
    tensor,
)
from blochkit.errors import ConvergenceError
from blochkit.hybrid import (
    ImpulseSchedule,
    SystemConfig,
    Trajectory,
    apply_impulse,
    closed_bloch_rhs,
    periodic_fixed_point_affine,
    periodic_steady_state,
    relaxation_bloch_rhs,
    simulate_hybrid,
)
from blochkit.filtering import (
    FilterRun,
    MeasurementRecord,
    NoiseSource,
    filter_step_normalized,
    filter_step_unnormalized,
    monte_carlo_mean,
    normalize_extended,
    replay_record,
    risk_filter_step,
    simulate_record,
)
from blochkit.slh import SLHParams, atom_params, concat, master_rhs, series

__version__ = "0.1.0"
