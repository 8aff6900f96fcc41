"""Mean-field and exact simulation of cavity-mediated momentum-exchange interactions."""

__version__ = "0.1.0"

from .physics import CouplingRates, PhysicsParams, compute_rates, chi_detuning_curve  # noqa: E402
from .state import InhomogeneityProfile, MomentumGrid, SpinField, init_state  # noqa: E402
from .dynamics import (evolve_effective, evolve_free, evolve_full_cavity,  # noqa: E402
                       evolve_pure_oat, evolve_two_ensemble)
from .sequence import (Bragg, Dressing, Free, Mark, PulseSequence, FringeResult,  # noqa: E402
                       apply_bragg, fringe_scan, make_engine, run_sequence)

__all__ = [
    "CouplingRates", "PhysicsParams", "compute_rates", "chi_detuning_curve",
    "InhomogeneityProfile", "MomentumGrid", "SpinField", "init_state",
    "evolve_effective", "evolve_free", "evolve_full_cavity", "evolve_pure_oat",
    "evolve_two_ensemble", "Bragg", "Dressing", "Free", "Mark", "PulseSequence",
    "FringeResult", "apply_bragg", "fringe_scan", "make_engine", "run_sequence",
]
