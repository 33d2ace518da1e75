"""Analytic layer: the semigroups u_t, u*_t and every Laplace functional built on them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import PchipInterpolator

from .errors import DomainError, InvariantViolation, NStarUndefinedError, NumericalError
from .mechanisms import (
    BranchingMechanism,
    ImmigrationMechanism,
    _psi_raw,
    conditioned_mechanism,
    phi_eval,
    phi_star_eval,
    psi_eval,
    psi_prime,
    validate,
)

__all__ = ["SemigroupSolver", "VStarTable", "gauss_legendre"]

_LINEAR_REGIME = 1e-100
MAX_PANELS = 4096


def gauss_legendre(f, a: float, b: float, order: int = 16, rtol: float = 1e-10, atol: float = 1e-15) -> float:
    """Composite Gauss-Legendre rule, doubling the panel count until converged.

    ``f`` must accept an array of abscissae.
    """
    if b <= a:
        return 0.0
    nodes, weights = np.polynomial.legendre.leggauss(order)
    prev = None
    panels = 1
    while panels <= MAX_PANELS:
        edges = np.linspace(a, b, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        x = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
        vals = np.asarray(f(x), dtype=float).reshape(panels, order)
        est = math.fsum((half[:, None] * weights[None, :] * vals).ravel())
        if prev is not None and abs(est - prev) <= max(rtol * abs(est), atol):
            return est
        prev = est
        panels *= 2
    raise NumericalError(f"quadrature on [{a}, {b}] did not converge")


@dataclass
class SemigroupSolver:
    """Cached numerical evaluator for u_t, u*_t, v*_s, w_t and the targets built from them.

    The integral equations are solved as the equivalent initial value problems
    du/ds = -psi(u) (resp. -psi*(u)) with an adaptive 8th order Runge-Kutta
    scheme.
    """

    mech: BranchingMechanism
    imm: ImmigrationMechanism
    ode_rel_tol: float = 1e-10
    ode_abs_tol: float = 1e-12
    quad_points: int = 16
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self.diagnostics = validate(self.mech, self.imm)
        self.lam_star = self.diagnostics.lam_star
        self.q = self.diagnostics.q
        self.p = self.diagnostics.p
        self.tilted = conditioned_mechanism(self.mech)

    # -- ODE plumbing ------------------------------------------------------

    def _rhs(self, tilted: bool):
        mech, shift = self.mech, (self.lam_star if tilted else 0.0)

        def rhs(_s, u):
            return -_psi_raw(mech, u + shift)

        return rhs

    def _flow(self, kind: str, lam: float, t: float):
        """Dense solution of the ODE started at ``lam`` on [0, t] (memoised)."""
        key = ("flow", kind, float(lam), float(t))
        sol = self._cache.get(key)
        if sol is None:
            res = integrate.solve_ivp(
                self._rhs(kind == "star"),
                (0.0, t),
                [lam],
                method="DOP853",
                rtol=self.ode_rel_tol,
                atol=self.ode_abs_tol,
                dense_output=True,
            )
            if not res.success:
                raise NumericalError(f"ODE failure for {kind} flow from {lam} on [0, {t}]: {res.message}")
            sol = res.sol
            self._cache[key] = sol
        return sol

    def _point(self, kind: str, t: float, lam: float) -> float:
        if t < 0:
            raise DomainError("t must be >= 0")
        if lam < 0:
            raise DomainError("initial value must be >= 0")
        if t == 0 or lam == 0:
            # 0 is a fixed point of both flows since psi(0) = psi*(0) = 0
            return float(lam)
        if lam < _LINEAR_REGIME:
            # the flow is linear to machine precision here, and the ODE error norm would underflow
            slope = self.q if kind == "star" else self.diagnostics.psi_prime_zero
            val = lam * math.exp(-slope * t)
            if val < _LINEAR_REGIME:
                return val
        key = (kind, float(t), float(lam))
        val = self._cache.get(key)
        if val is None:
            res = integrate.solve_ivp(
                self._rhs(kind == "star"),
                (0.0, t),
                [lam],
                method="DOP853",
                rtol=self.ode_rel_tol,
                atol=self.ode_abs_tol,
            )
            if not res.success:
                raise NumericalError(f"ODE failure for {kind} from {lam} on [0, {t}]: {res.message}")
            val = float(res.y[0, -1])
            self._cache[key] = val
        return val

    # -- semigroups --------------------------------------------------------

    def solve_u(self, t: float, lam: float) -> float:
        """u_t(lam): the Laplace exponent of the (psi, 0)-CSBP."""
        return self._point("u", t, lam)

    def solve_u_star(self, t: float, theta: float) -> float:
        """u*_t(theta) for the conditioned mechanism psi*."""
        return self._point("star", t, theta)

    def solve_u_star_via_u(self, t: float, theta: float) -> float:
        """Second route to u*_t(theta) = u_t(theta + lam*) - lam*."""
        return self.solve_u(t, theta + self.lam_star) - self.lam_star

    # -- excursion survival mass ------------------------------------------

    def _tail_integral(self, v: float) -> float:
        """int_v^inf dxi / psi*(xi), via xi = v / w on (0, 1]."""
        tilted = self.tilted
        beta = self.mech.beta

        def integrand(w):
            if w <= 0:
                return 1.0 / (beta * v)
            xi = v / w
            return v / (w * w * float(tilted(xi)))

        val, _err = integrate.quad(integrand, 0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200)
        return val

    def _require_grey(self):
        if self.mech.beta <= 0:
            raise NStarUndefinedError("v*_s is infinite when beta = 0 for the supported jump families")

    def survival_v_star(self, s: float) -> float:
        """v*_s = N*(X_s > 0), the root of int_{v}^inf dxi/psi*(xi) = s."""
        self._require_grey()
        if not s > 0:
            raise DomainError("s must be > 0")
        key = ("vstar", float(s))
        val = self._cache.get(key)
        if val is not None:
            return val
        g = lambda logv: self._tail_integral(math.exp(logv)) - s  # noqa: E731
        # small-gap asymptote v ~ 1/(beta s) as the starting guess
        x0 = -math.log(self.mech.beta * s)
        lo, hi = x0 - 1.0, x0 + 1.0
        for _ in range(200):
            if g(lo) > 0:
                break
            lo -= 2.0
        for _ in range(200):
            if g(hi) < 0:
                break
            hi += 2.0
        logv = optimize.brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        val = math.exp(logv)
        self._cache[key] = val
        return val

    def v_star_table(self, s_min: float, s_max: float, n: int = 1024) -> "VStarTable":
        """Monotone interpolation table of v*_s on [s_min, s_max] in log-log coordinates."""
        key = ("vtable", float(s_min), float(s_max), n)
        tab = self._cache.get(key)
        if tab is None:
            v_hi = self.survival_v_star(s_min) * 1.05
            v_lo = self.survival_v_star(s_max) * 0.95
            v = np.geomspace(v_lo, v_hi, n)
            s = np.array([self._tail_integral(x) for x in v])
            order = np.argsort(s)
            tab = VStarTable(np.log(s[order]), np.log(v[order]), s_min, s_max)
            self._cache[key] = tab
        return tab

    # -- backbone functionals ---------------------------------------------

    def w_of(self, t: float, r: float, theta: float) -> float:
        """w_t(r, theta) from lam*(1 - e^{-w}) = u_t(theta + lam*(1-r)) - u*_t(theta).

        Returns ``math.inf`` when the backbone cannot be extinct (r = theta = 0, t > 0).
        """
        _check_r(r)
        if theta < 0:
            raise DomainError("theta must be >= 0")
        ls = self.lam_star
        if t > 0 and r == 0 and theta == 0:
            return math.inf
        diff = self.solve_u(t, theta + ls * (1 - r)) - self.solve_u_star(t, theta)
        arg = 1.0 - diff / ls
        tol = 100 * (self.ode_abs_tol + self.ode_rel_tol * (theta + ls)) / ls
        if arg < -tol or arg > 1 + tol:
            raise InvariantViolation(f"log argument {arg} outside [0, 1] at t={t}, r={r}, theta={theta}")
        if arg <= 0:
            return math.inf
        return -math.log(min(arg, 1.0))

    def lemma1_residual(self, t: float, r: float, theta: float) -> float:
        """|w from the integral equation solved as an ODE - w from the closed form|."""
        _check_r(r)
        if r == 0 and theta == 0:
            raise DomainError("lemma1_residual excludes the w = inf point r = theta = 0")
        w_closed = self.w_of(t, r, theta)
        if t == 0:
            return abs(w_closed - (-math.log(r)))
        mech, ls = self.mech, self.lam_star

        def rhs(_s, y):
            ustar, e = y
            a = _psi_raw(mech, ustar + ls)
            b = _psi_raw(mech, ustar + ls * (1.0 - e))
            return [-a, (b - a) / ls]

        res = integrate.solve_ivp(
            rhs, (0.0, t), [theta, r], method="DOP853", rtol=self.ode_rel_tol, atol=self.ode_abs_tol
        )
        if not res.success:
            raise NumericalError(res.message)
        e_t = res.y[1, -1]
        return abs(w_closed - (-math.log(e_t)))

    def immigration_integral(self, t: float, lam: float) -> float:
        """int_0^t phi(u_s(lam)) ds."""
        if t < 0 or lam < 0:
            raise DomainError("t and lam must be >= 0")
        if t == 0 or not self.imm.enabled:
            return 0.0
        key = ("imm", float(t), float(lam))
        val = self._cache.get(key)
        if val is None:
            sol = self._flow("u", lam, t)
            imm = self.imm
            val = gauss_legendre(
                lambda s: phi_eval(imm, np.maximum(sol(s)[0], 0.0)), 0.0, t, self.quad_points, self.ode_rel_tol
            )
            self._cache[key] = val
        return val

    def spine_integral(self, t: float, theta: float) -> float:
        """int_0^t phi*(u*_s(theta)) ds, the log-Laplace transform of the spine dressing."""
        if t < 0 or theta < 0:
            raise DomainError("t and theta must be >= 0")
        if t == 0 or not self.imm.enabled:
            return 0.0
        sol = self._flow("star", theta, t)
        imm, ls = self.imm, self.lam_star
        return gauss_legendre(
            lambda s: phi_star_eval(imm, ls, np.maximum(sol(s)[0], 0.0)), 0.0, t, self.quad_points, self.ode_rel_tol
        )

    def cbi_laplace(self, x: float, t: float, lam: float) -> float:
        """E_x exp(-lam X_t) for the (psi, phi)-CSBP."""
        if x < 0:
            raise DomainError("x must be >= 0")
        return math.exp(-x * self.solve_u(t, lam) - self.immigration_integral(t, lam))

    def joint_backbone_laplace(self, x: float, t: float, r: float, theta: float) -> float:
        """Target for E[r^{Z_t} exp(-theta Lambda_t)], including the immigration factor."""
        _check_r(r)
        if theta < 0:
            raise DomainError("theta must be >= 0")
        return self.cbi_laplace(x, t, theta + self.lam_star * (1 - r))

    def F_of(self, r: float) -> float:
        _check_r(r)
        return psi_eval(self.mech, self.lam_star * (1 - r)) / self.lam_star

    def G_of(self, r: float) -> float:
        _check_r(r)
        return self.p - phi_eval(self.imm, self.lam_star * (1 - r))

    def psi_star_prime_zero(self) -> float:
        return psi_prime(self.mech, self.lam_star)


def _check_r(r: float) -> None:
    if not 0.0 <= r <= 1.0:
        raise DomainError(f"r must lie in [0, 1], got {r}")


@dataclass(frozen=True)
class VStarTable:
    log_s: np.ndarray
    log_v: np.ndarray
    s_min: float
    s_max: float

    def __post_init__(self):
        object.__setattr__(self, "_interp", PchipInterpolator(self.log_s, self.log_v, extrapolate=False))

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s < self.s_min * (1 - 1e-12)) or np.any(s > self.s_max * (1 + 1e-12)):
            raise DomainError(f"v* table covers [{self.s_min}, {self.s_max}]")
        s = np.clip(s, self.s_min, self.s_max)
        return np.exp(self._interp(np.log(s)))
