"""Finite-volume tools for multiscale localization of random lattice operators."""

from __future__ import annotations

from .errors import (
    ConfigError,
    CoverInfeasible,
    ImplicationViolation,
    InfeasibleParameters,
    MSAError,
    PreconditionError,
    SolverFailure,
)
from .harness import ExperimentConfig, ExperimentRecord, run_trials, verify_init_step
from .lattice import LatticeBox, Region, make_box, suitable_cover
from .localization import classify_box, label_sites
from .operator import FiniteOperator, box_hamiltonian, build_hamiltonian
from .parameters import ParameterSet, solve_parameters, validate
from .spectral import Eigensystem, eigensystem

__all__ = [
    "ConfigError", "CoverInfeasible", "Eigensystem", "ExperimentConfig", "ExperimentRecord", "FiniteOperator",
    "ImplicationViolation", "InfeasibleParameters", "LatticeBox", "MSAError", "ParameterSet", "PreconditionError",
    "Region", "SolverFailure", "box_hamiltonian", "build_hamiltonian", "classify_box", "eigensystem",
    "label_sites", "make_box", "run_trials", "solve_parameters", "suitable_cover", "validate",
    "verify_init_step",
]
