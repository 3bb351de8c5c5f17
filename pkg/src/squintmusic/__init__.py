"""Wideband massive-MIMO DOA estimation with beam-squint and gain-phase
auto-calibration: echo simulation, corrected-subspace MUSIC estimation,
Cramér-Rao bounds, and a Monte-Carlo benchmark harness.
"""

__version__ = "0.1.0"

from .arrays import (
    Combiner,
    SubcarrierGrid,
    SystemConfig,
    beam_squint_offset,
    build_combiner,
    sample_gpm,
    squint_transform,
    steering_matrix,
    steering_vector,
    subcarrier_grid,
)
from .simulate import (
    ObservationSet,
    Scenario,
    array_gain_profile,
    generate_probing,
    load_scenario,
    sample_scenario,
    save_scenario,
    simulate_echo,
)
from .estimator import (
    MODES,
    EstimationResult,
    GpmConditioningWarning,
    Spectrum,
    SubspaceGapWarning,
    autocal_music,
    corrected_spectrum,
    estimate_gpm,
    find_spectrum_peaks,
    noise_subspace,
    sample_covariance,
    steering_residual,
)
from .crb import (
    CrbResult,
    ParameterLayout,
    SteeringDerivatives,
    crb_closed_form,
    crb_fim_inverse,
    fisher_information,
    parameter_layout,
    spatial_var_to_deg2,
    steering_derivatives,
    true_covariance,
)
from .bench import (
    ExperimentSpec,
    RmseRecord,
    TrialRecord,
    emit_outputs,
    parse_records,
    run_from_manifest,
    run_sweep,
    run_trial,
)

__all__ = [
    "__version__",
    # arrays
    "SystemConfig",
    "SubcarrierGrid",
    "Combiner",
    "subcarrier_grid",
    "steering_vector",
    "steering_matrix",
    "beam_squint_offset",
    "squint_transform",
    "sample_gpm",
    "build_combiner",
    # simulation
    "Scenario",
    "ObservationSet",
    "sample_scenario",
    "generate_probing",
    "simulate_echo",
    "array_gain_profile",
    "save_scenario",
    "load_scenario",
    # estimation
    "MODES",
    "Spectrum",
    "EstimationResult",
    "SubspaceGapWarning",
    "GpmConditioningWarning",
    "sample_covariance",
    "noise_subspace",
    "steering_residual",
    "corrected_spectrum",
    "find_spectrum_peaks",
    "estimate_gpm",
    "autocal_music",
    # bounds
    "SteeringDerivatives",
    "ParameterLayout",
    "CrbResult",
    "steering_derivatives",
    "true_covariance",
    "parameter_layout",
    "fisher_information",
    "crb_closed_form",
    "crb_fim_inverse",
    "spatial_var_to_deg2",
    # benchmark
    "ExperimentSpec",
    "TrialRecord",
    "RmseRecord",
    "run_trial",
    "run_sweep",
    "emit_outputs",
    "parse_records",
    "run_from_manifest",
]
