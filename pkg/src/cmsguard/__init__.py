"""
Component mode selection with guaranteed assembly accuracy.

Hintz-Herting reduction of structural components, FRF-based coupling,
translation of assembly accuracy requirements into component requirements,
and component eigenmode selection strategies.
"""

from .assembly import Interconnection, block_diag_frf, build_n, couple, n_samples, relative_error
from .reduction import hh_basis, reduce
from .requirements import (
    WeightSet,
    check_requirement,
    design_relative_weights,
    translate,
    verify_certificate,
)
from .selection import METHODS, SelectionProblem, SelectionResult, run_method
from .structural import (
    FrequencyGrid,
    FrfData,
    ModelError,
    ModeSet,
    SecondOrderModel,
    apply_modal_damping,
    build_euler_beam,
    frf_direct,
    frf_modal,
    solve_undamped_modes,
    with_ports,
)

__version__ = "0.1.0"

__all__ = [
    "Interconnection",
    "block_diag_frf",
    "build_n",
    "couple",
    "n_samples",
    "relative_error",
    "hh_basis",
    "reduce",
    "WeightSet",
    "check_requirement",
    "design_relative_weights",
    "translate",
    "verify_certificate",
    "METHODS",
    "SelectionProblem",
    "SelectionResult",
    "run_method",
    "FrequencyGrid",
    "FrfData",
    "ModelError",
    "ModeSet",
    "SecondOrderModel",
    "apply_modal_damping",
    "build_euler_beam",
    "frf_direct",
    "frf_modal",
    "solve_undamped_modes",
    "with_ports",
]
