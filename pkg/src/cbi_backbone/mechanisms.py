"""Branching and immigration mechanisms.

A branching mechanism is the Levy triplet ``(alpha, beta, Pi)`` of

    psi(lam) = alpha*lam + beta*lam**2 + int (exp(-lam*x) - 1 + lam*x*1{x<1}) Pi(dx)

and an immigration mechanism is the pair ``(delta, nu)`` of

    phi(lam) = delta*lam + int (1 - exp(-lam*x)) nu(dx).

Jump measures come from a closed set of parametric families whose integrals
are available in closed form, so every evaluation below is exact up to
floating point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import special

from .errors import (
    DegenerateMechanismError,
    DomainError,
    InfiniteMeanError,
    InvalidParameterError,
    NotSupercriticalError,
    NumericalError,
)

__all__ = [
    "ZeroMeasure",
    "CompoundExponential",
    "FiniteAtoms",
    "JumpMeasure",
    "BranchingMechanism",
    "ImmigrationMechanism",
    "TiltedMechanism",
    "Diagnostics",
    "psi_eval",
    "psi_prime",
    "psi_second",
    "phi_eval",
    "lambda_star",
    "conditioned_mechanism",
    "phi_star_eval",
    "phi_star_u_eval",
    "validate",
]


# ---------------------------------------------------------------------------
# jump measure families
#
# Every family implements the same small set of integrals. ``tilt`` multiplies
# the measure by exp(-tilt*x); arguments may be numpy arrays and, where noted,
# complex.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ZeroMeasure:
    """The null measure."""

    family = "zero"

    def is_zero(self) -> bool:
        return True

    def total_mass(self, tilt=0.0):
        return 0.0 * np.asarray(tilt, dtype=float)

    def moment(self, k: int, tilt=0.0, upper: float = math.inf, lower: float = 0.0):
        return 0.0

    def laplace_jump(self, lam, tilt=0.0):
        return 0.0 * lam

    def one_minus_exp(self, lam, tilt=0.0, power: int = 0):
        return 0.0 * lam

    def psi_tail(self, lam):
        return 0.0 * lam

    def to_dict(self) -> dict:
        return {"family": "zero"}


@dataclass(frozen=True)
class CompoundExponential:
    """Measure with density ``rate * scale * exp(-scale * x)`` on (0, inf).

    ``rate`` is the total mass and ``scale`` the exponential rate of the jump
    sizes (mean jump ``1/scale``).
    """

    rate: float
    scale: float
    family = "compound_exponential"

    def __post_init__(self):
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise InvalidParameterError(f"compound exponential rate must be > 0, got {self.rate}")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise InvalidParameterError(f"compound exponential scale must be > 0, got {self.scale}")

    def is_zero(self) -> bool:
        return False

    def total_mass(self, tilt=0.0):
        return self.rate * self.scale / (self.scale + np.asarray(tilt, dtype=float))

    def moment(self, k: int, tilt=0.0, upper: float = math.inf, lower: float = 0.0):
        # int_{lower}^{upper} x^k c mu e^{-(mu+tilt) x} dx
        a = self.scale + tilt
        full = self.rate * self.scale * math.gamma(k + 1) / a ** (k + 1)
        lo = special.gammaincc(k + 1, a * lower) if lower > 0 else 1.0
        hi = special.gammaincc(k + 1, a * upper) if math.isfinite(upper) else 0.0
        return full * (lo - hi)

    def laplace_jump(self, lam, tilt=0.0):
        # int (e^{-lam x} - 1) e^{-tilt x} M(dx); complex lam allowed
        a = self.scale + tilt
        return -self.rate * self.scale * lam / (a * (a + lam))

    def one_minus_exp(self, lam, tilt=0.0, power: int = 0):
        # int x^power (1 - e^{-lam x}) e^{-tilt x} M(dx)
        a = self.scale + np.asarray(tilt, dtype=float)
        k = power + 1
        c = self.rate * self.scale * math.gamma(k)
        return c * (1.0 / a**k - 1.0 / (a + lam) ** k)

    def psi_tail(self, lam):
        # int (e^{-lam x} - 1 + lam x 1{x<1}) M(dx)
        return self.laplace_jump(lam) + lam * self.moment(1, upper=1.0)

    def to_dict(self) -> dict:
        return {"family": "compound_exponential", "rate": self.rate, "scale": self.scale}


@dataclass(frozen=True)
class FiniteAtoms:
    """Measure ``sum_i m_i delta_{x_i}``; atoms are stored sorted by location."""

    atoms: tuple[tuple[float, float], ...]
    family = "finite_atoms"
    _x: np.ndarray = field(init=False, repr=False, compare=False)
    _m: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        atoms = tuple(sorted((float(x), float(m)) for x, m in self.atoms))
        if not atoms:
            raise InvalidParameterError("finite_atoms needs at least one atom; use zero instead")
        xs = [a[0] for a in atoms]
        for x, m in atoms:
            if not (x > 0 and math.isfinite(x)) or not (m > 0 and math.isfinite(m)):
                raise InvalidParameterError(f"atom ({x}, {m}) must have positive finite location and mass")
        if len(set(xs)) != len(xs):
            raise InvalidParameterError("atom locations must be distinct")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "_x", np.array(xs))
        object.__setattr__(self, "_m", np.array([a[1] for a in atoms]))

    def is_zero(self) -> bool:
        return False

    @property
    def locations(self) -> np.ndarray:
        return self._x

    @property
    def masses(self) -> np.ndarray:
        return self._m

    def total_mass(self, tilt=0.0):
        tilt = np.asarray(tilt, dtype=float)
        return np.sum(self._m * np.exp(-np.multiply.outer(tilt, self._x)), axis=-1)

    def moment(self, k: int, tilt=0.0, upper: float = math.inf, lower: float = 0.0):
        sel = (self._x >= lower) & (self._x < upper)
        x, m = self._x[sel], self._m[sel]
        return float(np.sum(m * x**k * np.exp(-tilt * x)))

    def _sum(self, values):
        return np.sum(values, axis=-1)

    def laplace_jump(self, lam, tilt=0.0):
        lam = np.asarray(lam)
        xl = np.multiply.outer(lam, self._x)
        w = self._m * np.exp(-tilt * self._x)
        return self._sum(w * np.expm1(-xl))

    def one_minus_exp(self, lam, tilt=0.0, power: int = 0):
        lam = np.asarray(lam)
        tilt = np.asarray(tilt, dtype=float)
        w = self._m * self._x**power * np.exp(-np.multiply.outer(tilt, self._x))
        return self._sum(-w * np.expm1(-np.multiply.outer(lam, self._x)))

    def psi_tail(self, lam):
        return self.laplace_jump(lam) + np.asarray(lam) * self.moment(1, upper=1.0)

    def to_dict(self) -> dict:
        return {"family": "finite_atoms", "atoms": [list(a) for a in self.atoms]}


JumpMeasure = Union[ZeroMeasure, CompoundExponential, FiniteAtoms]


def jump_measure_from_dict(d: dict) -> JumpMeasure:
    family = d.get("family", "zero")
    if family == "zero":
        return ZeroMeasure()
    if family == "compound_exponential":
        return CompoundExponential(float(d["rate"]), float(d["scale"]))
    if family == "finite_atoms":
        return FiniteAtoms(tuple((float(x), float(m)) for x, m in d["atoms"]))
    raise InvalidParameterError(f"unknown jump measure family {family!r}")


# ---------------------------------------------------------------------------
# mechanisms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BranchingMechanism:
    alpha: float
    beta: float
    pi: JumpMeasure = ZeroMeasure()

    def __post_init__(self):
        if not math.isfinite(self.alpha):
            raise InvalidParameterError("alpha must be finite")
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise InvalidParameterError(f"beta must be >= 0, got {self.beta}")

    def __call__(self, lam):
        return psi_eval(self, lam)

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "jumps": self.pi.to_dict()}


@dataclass(frozen=True)
class ImmigrationMechanism:
    delta: float = 0.0
    nu: JumpMeasure = ZeroMeasure()

    def __post_init__(self):
        if not (self.delta >= 0 and math.isfinite(self.delta)):
            raise InvalidParameterError(f"delta must be >= 0, got {self.delta}")

    def __call__(self, lam):
        return phi_eval(self, lam)

    @property
    def enabled(self) -> bool:
        return self.delta > 0 or not self.nu.is_zero()

    def to_dict(self) -> dict:
        return {"delta": self.delta, "jumps": self.nu.to_dict()}


@dataclass(frozen=True)
class TiltedMechanism:
    """psi*(lam) = psi(lam + shift), kept as (base, shift) rather than re-expanded."""

    base: BranchingMechanism
    shift: float

    def __call__(self, lam):
        # lam may go down to -shift; the w equation evaluates there
        lam = np.asarray(lam, dtype=float)
        if np.any(lam < -self.shift * (1 + 1e-12) - 1e-15):
            raise DomainError("psi* is only defined for lam >= -lambda*")
        return _psi_raw(self.base, np.maximum(lam + self.shift, 0.0))

    def prime(self, lam):
        return psi_prime(self.base, np.asarray(lam, dtype=float) + self.shift)

    @property
    def tilted_jumps(self) -> JumpMeasure:
        """The jump measure exp(-lambda* x) Pi(dx) of the conditioned process."""
        pi = self.base.pi
        if isinstance(pi, CompoundExponential):
            return CompoundExponential(float(pi.total_mass(self.shift)), pi.scale + self.shift)
        if isinstance(pi, FiniteAtoms):
            return FiniteAtoms(tuple(zip(pi.locations, pi.masses * np.exp(-self.shift * pi.locations))))
        return pi

    @property
    def linear_coefficient(self) -> float:
        """b in psi*(lam) = b lam + beta lam^2 + int (e^{-lam x} - 1) Pi*(dx)."""
        base = self.base
        return base.alpha + 2 * base.beta * self.shift + base.pi.moment(1, upper=1.0)

    def complex_eval(self, lam):
        """psi* at complex lam with Re(lam) >= 0 (used by Laplace inversion)."""
        b = self.linear_coefficient
        return b * lam + self.base.beta * lam**2 + self.base.pi.laplace_jump(lam, tilt=self.shift)


def _check_nonneg(lam):
    arr = np.asarray(lam, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError(f"argument must be >= 0, got {lam}")
    return arr


def _psi_raw(mech: BranchingMechanism, lam):
    out = mech.alpha * lam + mech.beta * lam**2 + mech.pi.psi_tail(lam)
    return float(out) if np.ndim(out) == 0 else out


def psi_eval(mech: BranchingMechanism, lam):
    """Evaluate the branching mechanism at ``lam >= 0``."""
    return _psi_raw(mech, _check_nonneg(lam))


def psi_prime(mech: BranchingMechanism, lam):
    """psi'(lam) = alpha + 2 beta lam + int (x 1{x<1} - x e^{-lam x}) Pi(dx)."""
    lam = _check_nonneg(lam)
    pi = mech.pi
    jump = pi.moment(1, upper=1.0) - _first_moment_tilted(pi, lam)
    out = mech.alpha + 2 * mech.beta * lam + jump
    return float(out) if np.ndim(out) == 0 else out


def psi_second(mech: BranchingMechanism, lam):
    """psi''(lam) = 2 beta + int x^2 e^{-lam x} Pi(dx)."""
    lam = _check_nonneg(lam)
    pi = mech.pi
    if pi.is_zero():
        return 2 * mech.beta + 0.0 * lam
    if isinstance(pi, CompoundExponential):
        return 2 * mech.beta + 2 * pi.rate * pi.scale / (pi.scale + lam) ** 3
    return 2 * mech.beta + np.sum(pi.masses * pi.locations**2 * np.exp(-np.multiply.outer(lam, pi.locations)), axis=-1)


def _first_moment_tilted(pi: JumpMeasure, lam):
    if pi.is_zero():
        return 0.0 * lam
    if isinstance(pi, CompoundExponential):
        return pi.rate * pi.scale / (pi.scale + lam) ** 2
    return np.sum(pi.masses * pi.locations * np.exp(-np.multiply.outer(lam, pi.locations)), axis=-1)


def phi_eval(imm: ImmigrationMechanism, lam):
    """Evaluate the immigration mechanism at ``lam >= 0``."""
    lam = _check_nonneg(lam)
    out = imm.delta * lam + imm.nu.one_minus_exp(lam)
    return float(out) if np.ndim(out) == 0 else out


def phi_star_eval(imm: ImmigrationMechanism, lam_star: float, lam):
    """phi(lam + lam*) - phi(lam*), computed against the tilted measure directly."""
    lam = _check_nonneg(lam)
    out = imm.delta * lam + imm.nu.one_minus_exp(lam, tilt=lam_star)
    return float(out) if np.ndim(out) == 0 else out


def phi_star_u_eval(imm: ImmigrationMechanism, lam_star: float, u: float, lam):
    """delta lam + int (1 - e^{-lam y}) e^{-y (lam* + u)} nu(dy).

    ``lam`` may be negative as long as ``lam + lam* + u >= 0``.
    """
    lam = np.asarray(lam, dtype=float)
    shift = lam_star + u
    if shift < 0 or np.any(lam + shift < 0):
        raise DomainError("phi*_u needs lam* + u >= 0 and lam + lam* + u >= 0")
    out = imm.delta * lam + imm.nu.one_minus_exp(lam, tilt=shift)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# root and validation
# ---------------------------------------------------------------------------

ROOT_MAX_ITER = 200


def _psi_prime_zero(mech: BranchingMechanism) -> float:
    pi = mech.pi
    return mech.alpha + pi.moment(1, upper=1.0) - pi.moment(1)


def lambda_star(mech: BranchingMechanism, tol: float = 1e-12) -> float:
    """Largest root of psi, i.e. the unique root on (0, inf).

    Newton's method started to the right of the root converges monotonically
    for a convex function; a bisection step is taken whenever an iterate
    leaves the bracket.
    """
    _check_supercritical(mech)
    lo, hi = 0.0, 1.0
    for _ in range(ROOT_MAX_ITER):
        if psi_eval(mech, hi) > 0:
            break
        lo, hi = hi, 2 * hi
    else:
        raise NumericalError("could not bracket the root of psi")

    x = hi
    for _ in range(ROOT_MAX_ITER):
        fx = psi_eval(mech, x)
        if fx == 0:
            return x
        if fx > 0:
            hi = x
        else:
            lo = x
        d = psi_prime(mech, x)
        x_new = x - fx / d if d > 0 else 0.5 * (lo + hi)
        if not (lo < x_new < hi):
            x_new = 0.5 * (lo + hi)
        # keep iterating past the residual test: the step size, not the
        # residual, controls the error in lambda* itself
        if abs(x_new - x) <= 4 * np.finfo(float).eps * x:
            scale = max(1.0, abs(mech.alpha) * x + mech.beta * x * x)
            if abs(psi_eval(mech, x_new)) < tol * scale:
                return x_new
        x = x_new
    raise NumericalError("lambda* iteration did not converge")


def conditioned_mechanism(mech: BranchingMechanism) -> TiltedMechanism:
    return TiltedMechanism(mech, lambda_star(mech))


def _check_supercritical(mech: BranchingMechanism) -> None:
    if mech.beta == 0 and mech.pi.is_zero():
        raise DegenerateMechanismError("psi is linear (beta = 0 and no jumps); lambda* does not exist")
    if not math.isfinite(mech.pi.moment(1, lower=1.0)):
        raise InfiniteMeanError("int_[1,inf) x Pi(dx) must be finite")
    if not _psi_prime_zero(mech) < 0:
        raise NotSupercriticalError(f"psi'(0+) = {_psi_prime_zero(mech):.6g} is not < 0")
    if mech.beta == 0:
        # with a finite jump measure psi(lam) ~ (alpha + int_{x<1} x Pi(dx)) lam at infinity
        slope = mech.alpha + mech.pi.moment(1, upper=1.0)
        if not slope > 0:
            raise DegenerateMechanismError(
                f"psi has no positive root: asymptotic slope {slope:.6g} is not > 0 and beta = 0"
            )


@dataclass(frozen=True)
class Diagnostics:
    lam_star: float
    q: float
    p: float
    psi_prime_zero: float
    immigration_enabled: bool
    flags: tuple[str, ...] = ()


def validate(mech: BranchingMechanism, imm: ImmigrationMechanism) -> Diagnostics:
    """Check supercriticality and conservativity and report lambda*, q, p."""
    _check_supercritical(mech)
    for measure, name in ((mech.pi, "Pi"), (imm.nu, "nu")):
        # 1 ^ x^2 (Pi) and 1 ^ x (nu) integrability are automatic for finite measures
        if not measure.is_zero() and not math.isfinite(float(measure.total_mass())):
            raise InvalidParameterError(f"{name} must be a finite measure")
    lam = lambda_star(mech)
    q = psi_prime(mech, lam)
    p = phi_eval(imm, lam)
    flags = []
    if not imm.enabled:
        flags.append("immigration disabled")
    if mech.beta == 0:
        flags.append("no diffusion: excursion dressing and kernels unavailable")
    return Diagnostics(float(lam), float(q), float(p), float(_psi_prime_zero(mech)), imm.enabled, tuple(flags))
