"""Linear-optics simulation of multi-photon qutrit teleportation."""

__version__ = "0.1.0"

from .analysis import (
    classical_bound,
    entanglement_witness_fidelity,
    fidelity,
    fidelity_from_counts,
    mub_suite_report,
    qubit_subspace_bound,
    sigma_settings,
)
from .fock import FockState, Mode, ModeRegister, apply_mode_unitary, post_select_pattern
from .noise import NoiseParams, fidelity_landscape, hom_scan, splitting_ratio_perturbation
from .optics import build_experimental_multiport, qft_multiport, reck_decompose, recompose
from .protocol import bell_state, general_scheme, mub_states, run_teleport, u31_embed, weyl_operator

__all__ = [
    "FockState",
    "Mode",
    "ModeRegister",
    "NoiseParams",
    "apply_mode_unitary",
    "bell_state",
    "build_experimental_multiport",
    "classical_bound",
    "entanglement_witness_fidelity",
    "fidelity",
    "fidelity_from_counts",
    "fidelity_landscape",
    "general_scheme",
    "hom_scan",
    "mub_states",
    "mub_suite_report",
    "post_select_pattern",
    "qft_multiport",
    "qubit_subspace_bound",
    "reck_decompose",
    "recompose",
    "run_teleport",
    "sigma_settings",
    "splitting_ratio_perturbation",
    "u31_embed",
    "weyl_operator",
]
