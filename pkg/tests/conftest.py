import math

import numpy as np
import pytest

from cbi_backbone.backbone import BackboneSimulator
from cbi_backbone.kernels import InversionKernel, JumpExactKernel, QuadraticKernel
from cbi_backbone.mechanisms import (
    BranchingMechanism,
    CompoundExponential,
    FiniteAtoms,
    ImmigrationMechanism,
    ZeroMeasure,
)
from cbi_backbone.semigroup import SemigroupSolver

QUAD = BranchingMechanism(-1.0, 1.0, ZeroMeasure())
DRIFT = ImmigrationMechanism(1.0, ZeroMeasure())
ATOMS = BranchingMechanism(0.5, 0.5, FiniteAtoms(((2.0, 1.0), (0.5, 2.0))))
ATOMS_IMM = ImmigrationMechanism(0.5, FiniteAtoms(((1.0, 1.0),)))
CEXP = BranchingMechanism(-0.2, 0.5, CompoundExponential(2.0, 1.5))
CEXP_IMM = ImmigrationMechanism(0.3, CompoundExponential(1.0, 2.0))


# closed forms for psi = lam^2 - lam used as oracles throughout
def u_quad(t, lam):
    return lam / (lam + (1 - lam) * math.exp(-t))


def u_star_quad(t, theta):
    return theta * math.exp(-t) / (1 + theta * (1 - math.exp(-t)))


def v_star_quad(s):
    return 1 / math.expm1(s)


def imm_integral_quad(t, lam):
    return math.log(1 + lam * math.expm1(t))


@pytest.fixture(scope="session")
def quad_solver():
    return SemigroupSolver(QUAD, DRIFT)


@pytest.fixture(scope="session")
def quad_sim(quad_solver):
    return BackboneSimulator(quad_solver, 2.0)


@pytest.fixture(scope="session")
def atoms_solver():
    return SemigroupSolver(ATOMS, ATOMS_IMM)


@pytest.fixture(scope="session")
def atoms_sim(atoms_solver):
    return BackboneSimulator(atoms_solver, 1.0)


@pytest.fixture(scope="session")
def cexp_solver():
    return SemigroupSolver(CEXP, CEXP_IMM)


@pytest.fixture(scope="session")
def cexp_sim(cexp_solver):
    return BackboneSimulator(cexp_solver, 1.0)


@pytest.fixture(scope="session")
def quad_inversion(quad_solver):
    return InversionKernel(quad_solver, 2.0)


@pytest.fixture(scope="session")
def quad_exact(quad_solver):
    return QuadraticKernel(quad_solver, 2.0)


@pytest.fixture(scope="session")
def quad_jump(quad_solver):
    return JumpExactKernel(quad_solver, 2.0)


@pytest.fixture(scope="session")
def atoms_inversion(atoms_solver):
    return InversionKernel(atoms_solver, 1.0)


@pytest.fixture(scope="session")
def cexp_inversion(cexp_solver):
    return InversionKernel(cexp_solver, 1.0)


def lt_z(samples, target, theta):
    """z-score of the empirical Laplace transform at theta."""
    vals = np.exp(-theta * np.asarray(samples))
    se = vals.std(ddof=1) / math.sqrt(vals.size)
    return (vals.mean() - target) / se
