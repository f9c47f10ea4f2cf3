"""Recursive optimal estimation of quantum state vectors from measured observables."""

from .errors import *  # noqa: F401,F403
from .estimator import (
    EstimatorConfig,
    EstimatorState,
    batch_weighted_ls_oracle,
    correct,
    correlation_updates,
    gain,
    init,
    innovate,
    predict,
    step,
    update_covariance,
    wiener_solution,
)
from .harness import (
    ClosedLoop,
    RunSummary,
    TrajectoryRecord,
    error_covariance_estimate,
    fidelity,
    monte_carlo_compare,
    pseudo_inverse_baseline,
    run_battery,
    run_trajectory,
)
from .linalg import adjoint, hermitian_expm, operator_norm, solve_hermitian_pd
from .system import (
    MeasurementModel,
    NoiseSpec,
    SystemSpec,
    evolve,
    haar_random_unitary,
    inject_state_noise,
    normalized_operator,
    observe,
    outcome_probability,
    post_measurement_state,
    projective_model,
    sample_outcome,
    stacked_observable,
)

__version__ = "0.1.0"
