"""Beam-selection statistical beamforming for FDD massive MIMO downlink."""

from .beamforming import BeamAssignment, build_basis, beam_matrix, btbc_decode, btbc_encode
from .harness import ExperimentSpec, ResultTable, estimate_ber_bpsk, estimate_ergodic_rates, load_spec, run_experiment
from .rate import exact_rate, group_gains, sum_rate, user_rates
from .scenario import AngleGrid, SpatialProfile, SystemConfig
from .selection import SelectorConfig, select

__version__ = "0.1.0"

__all__ = [
    "AngleGrid",
    "BeamAssignment",
    "ExperimentSpec",
    "ResultTable",
    "SelectorConfig",
    "SpatialProfile",
    "SystemConfig",
    "beam_matrix",
    "btbc_decode",
    "btbc_encode",
    "build_basis",
    "estimate_ber_bpsk",
    "estimate_ergodic_rates",
    "exact_rate",
    "group_gains",
    "load_spec",
    "run_experiment",
    "select",
    "sum_rate",
    "user_rates",
]
