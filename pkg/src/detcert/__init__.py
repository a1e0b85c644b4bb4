"""Reduce imperfect threshold-detector setups to ideal ones, with certificates.

The library builds threshold-detector POVMs on truncated photon-number
blocks, models dark counts and loss as classical post-processing, squashes
to flag-state target measurements, constructs the noise channels that
absorb the imperfections, and certifies every claimed identity numerically
(CPTP via the Choi matrix, statistics equivalence over an operator basis,
weight relations, LP/SDP feasibility).
"""

__version__ = "0.1.0"

from .fock import (
    BlockOperator,
    DensityLike,
    SpaceLayout,
    direct_sum,
    flag_state,
    min_eigenvalue,
    pair_trace,
    psd_check,
    random_density,
    vacuum_state,
)
from .detectors import (
    DetectionSetup,
    EventTable,
    POVM,
    active_bb84_setups,
    build_threshold_povm,
    enumerate_events,
    passive_bb84_setup,
    verify_single_photon_assumption,
)
from .postprocessing import (
    CoarseGraining,
    StochasticMatrix,
    apply_postprocessing,
    bb84_qubit_squasher,
    bb84_squashed_dark_matrix,
    coarse_grained_dc_ansatz,
    dark_count_matrix,
    multiclick_coarse_graining,
    single_photon_loss_matrix,
    solve_swap_lp,
    validate_dark_count_pp,
)
from .squashing import (
    SquashedPOVM,
    WeightBound,
    eta_star_range,
    flag_state_target,
    min_weight_over_eta_grid,
    propagate_weight,
    weight_bound,
)
from .channels import (
    QuantumChannel,
    apply_channel,
    bb84_qubit_measurement,
    bb84_simple_noise_channel,
    compose,
    dark_count_channel,
    generic_channel,
    inf_norm_mixing,
    loss_channel,
    loss_split_matrix,
    min_deviation_q,
    verify_cptp,
    verify_statistics_equivalence,
)
from .feasibility import (
    FeasibilityResult,
    choi_feasibility,
    verify_choi_witness,
)
from .report import (
    Certificate,
    SetupDescriptor,
    emit_certificate,
    load_descriptor,
    run_analysis,
)

__all__ = [
    "BlockOperator",
    "Certificate",
    "CoarseGraining",
    "DensityLike",
    "DetectionSetup",
    "EventTable",
    "FeasibilityResult",
    "POVM",
    "QuantumChannel",
    "SetupDescriptor",
    "SpaceLayout",
    "SquashedPOVM",
    "StochasticMatrix",
    "WeightBound",
    "active_bb84_setups",
    "apply_channel",
    "apply_postprocessing",
    "bb84_qubit_measurement",
    "bb84_qubit_squasher",
    "bb84_simple_noise_channel",
    "bb84_squashed_dark_matrix",
    "build_threshold_povm",
    "choi_feasibility",
    "coarse_grained_dc_ansatz",
    "compose",
    "dark_count_channel",
    "dark_count_matrix",
    "direct_sum",
    "emit_certificate",
    "enumerate_events",
    "eta_star_range",
    "flag_state",
    "flag_state_target",
    "generic_channel",
    "inf_norm_mixing",
    "load_descriptor",
    "loss_channel",
    "loss_split_matrix",
    "min_deviation_q",
    "min_eigenvalue",
    "min_weight_over_eta_grid",
    "multiclick_coarse_graining",
    "pair_trace",
    "passive_bb84_setup",
    "propagate_weight",
    "psd_check",
    "random_density",
    "run_analysis",
    "single_photon_loss_matrix",
    "solve_swap_lp",
    "vacuum_state",
    "validate_dark_count_pp",
    "verify_choi_witness",
    "verify_cptp",
    "verify_single_photon_assumption",
    "verify_statistics_equivalence",
    "weight_bound",
]
