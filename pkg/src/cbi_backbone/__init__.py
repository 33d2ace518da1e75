"""Backbone decomposition of supercritical continuous-state branching processes with immigration."""

from .backbone import BackboneForest, BackboneSimulator, ForestBatch, simulate_samples
from .config import ScenarioConfig, load_config
from .kernels import InversionKernel, JumpExactKernel, QuadraticKernel, make_kernel
from .mechanisms import (
    BranchingMechanism,
    CompoundExponential,
    FiniteAtoms,
    ImmigrationMechanism,
    ZeroMeasure,
    lambda_star,
    phi_eval,
    psi_eval,
    validate,
)
from .semigroup import SemigroupSolver

__all__ = [
    "BackboneForest",
    "BackboneSimulator",
    "BranchingMechanism",
    "CompoundExponential",
    "FiniteAtoms",
    "ForestBatch",
    "ImmigrationMechanism",
    "InversionKernel",
    "JumpExactKernel",
    "QuadraticKernel",
    "ScenarioConfig",
    "SemigroupSolver",
    "ZeroMeasure",
    "lambda_star",
    "load_config",
    "make_kernel",
    "phi_eval",
    "psi_eval",
    "simulate_samples",
    "validate",
]
