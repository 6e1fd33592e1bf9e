"""Periodic orbits, Maslov indices and degenerate extrema of Hamiltonian
torus maps presented as compositions of generating functions."""

__version__ = "0.1.0"

from .trigpoly import TrigPolynomial
from .symmap import FactorizedMap, apply_factor, canonical_path, differential_factor, monodromy
from .action import (LoopConfiguration, OrbitRecord, SearchConfig, action_gradient, action_hessian,
                     action_value, find_critical_points, morse_data)
from .maslov import SymplecticPath, average_maslov, check_iteration_bounds, maslov_index
from .sdm import (accumulation_scan, modulus_function, sdm1_check, sdm_criteria,
                  vanishing_homotopy_verify)
from .spectrum import SpectrumTable, conley_single_gf_experiment, conley_zehnder_experiment, scan_periods
from .systems import SYSTEMS, sys_a, sys_b, sys_c, sys_d

__all__ = [
    "TrigPolynomial", "FactorizedMap", "apply_factor", "canonical_path", "differential_factor",
    "monodromy", "LoopConfiguration", "OrbitRecord", "SearchConfig", "action_gradient",
    "action_hessian", "action_value", "find_critical_points", "morse_data", "SymplecticPath",
    "average_maslov", "check_iteration_bounds", "maslov_index", "accumulation_scan",
    "modulus_function", "sdm1_check", "sdm_criteria", "vanishing_homotopy_verify",
    "SpectrumTable", "conley_single_gf_experiment", "conley_zehnder_experiment", "scan_periods",
    "SYSTEMS", "sys_a", "sys_b", "sys_c", "sys_d",
]
