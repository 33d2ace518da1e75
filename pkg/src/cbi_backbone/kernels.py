"""Samplers for the graft ingredients of the dressing.

Three laws are needed, all for the conditioned (psi*, 0)-CSBP:

* the transition from mass ``y`` over a gap ``s`` (Laplace transform
  ``exp(-y u*_s(theta))``);
* the same transition conditioned to be positive;
* the excursion-measure mass at gap ``s`` conditioned positive, whose Laplace
  transform is ``1 - u*_s(theta) / v*_s``.

Whenever ``v*_s`` is finite the transition is a compound Poisson sum of
``Poisson(y v*_s)`` independent excursion masses, so every backend only needs
to know how to draw excursion masses.

``QuadraticKernel`` covers ``Pi = 0`` exactly: the excursion mass is
exponential. ``JumpExactKernel`` covers the finite jump families exactly by
splitting excursions at their first jump. ``InversionKernel`` tabulates the
excursion-mass law by Fourier cosine inversion of its Laplace transform on a
log-spaced grid of gaps and draws by inverse CDF, interpolating normalised
quantiles between gaps.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import fft, integrate

from ._random import sample_tilted_jump, sum_by_group, truncated_poisson
from .errors import CapabilityError, DomainError, NumericalError
from .mechanisms import psi_second
from .semigroup import SemigroupSolver

__all__ = ["TransitionKernel", "QuadraticKernel", "JumpExactKernel", "InversionKernel", "make_kernel"]


class TransitionKernel:
    """Shared interface; subclasses provide ``v_star`` and ``sample_nstar_mass``."""

    backend = "abstract"

    def __init__(self, solver: SemigroupSolver, horizon: float):
        if solver.mech.beta <= 0:
            raise CapabilityError("transition kernels need beta > 0 (finite excursion survival mass)")
        self.solver = solver
        self.horizon = float(horizon)
        self.q = solver.q
        self.beta = solver.mech.beta

    def transition_laplace(self, y: float, s: float, theta: float) -> float:
        """exp(-y u*_s(theta)), the oracle for every sampler below."""
        if y < 0 or s < 0 or theta < 0:
            raise DomainError("y, s, theta must be >= 0")
        return math.exp(-y * self.solver.solve_u_star(s, theta))

    def _check_gap(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s <= 0) or np.any(s > self.horizon * (1 + 1e-12)):
            raise DomainError(f"gap must lie in (0, {self.horizon}]")
        return s

    def v_star(self, s):
        raise NotImplementedError

    def sample_nstar_mass(self, s, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def _sum_of_excursions(self, counts, s, rng):
        total = int(counts.sum())
        if total == 0:
            return np.zeros(counts.shape)
        gaps = np.repeat(s, counts)
        return sum_by_group(counts, self.sample_nstar_mass(gaps, rng))

    def sample_cbstar_transition(self, y, s, rng: np.random.Generator) -> np.ndarray:
        """Draws of X_s under P*_y, broadcast over ``y`` and ``s``."""
        y, s = np.broadcast_arrays(np.asarray(y, dtype=float), self._check_gap(s))
        y, s = y.ravel(), s.ravel()
        if np.any(y < 0):
            raise DomainError("initial mass must be >= 0")
        counts = rng.poisson(y * self.v_star(s))
        return self._sum_of_excursions(counts, s, rng)

    def sample_cbstar_conditioned_positive(self, y, s, rng: np.random.Generator) -> np.ndarray:
        """Draws of X_s under P*_y given X_s > 0."""
        y, s = np.broadcast_arrays(np.asarray(y, dtype=float), self._check_gap(s))
        y, s = y.ravel(), s.ravel()
        if np.any(y <= 0):
            raise DomainError("conditioning on survival needs y > 0")
        counts = truncated_poisson(rng, y * self.v_star(s), 1)
        return self._sum_of_excursions(counts, s, rng)


class QuadraticKernel(TransitionKernel):
    """Exact sampler for psi(lam) = alpha lam + beta lam^2.

    With a = exp(-q s) and b = (beta/q)(1 - exp(-q s)) the conditioned
    semigroup is u*_s(theta) = theta a / (1 + theta b), so the excursion mass
    is exponential with mean b and v*_s = a / b.
    """

    backend = "quadratic-exact"

    def __init__(self, solver: SemigroupSolver, horizon: float = math.inf):
        if not solver.mech.pi.is_zero():
            raise CapabilityError("the quadratic backend requires Pi = 0")
        super().__init__(solver, horizon)

    def scale(self, s):
        return (self.beta / self.q) * -np.expm1(-self.q * np.asarray(s, dtype=float))

    def v_star(self, s):
        s = np.asarray(s, dtype=float)
        return self.q / (self.beta * np.expm1(self.q * s))

    def sample_nstar_mass(self, s, rng):
        s = self._check_gap(s)
        return rng.exponential(self.scale(s))

    def _sum_of_excursions(self, counts, s, rng):
        return rng.gamma(counts.astype(float), self.scale(s))


# ---------------------------------------------------------------------------
# exact backend for finite jump measures
# ---------------------------------------------------------------------------


class JumpExactKernel(TransitionKernel):
    """Exact excursion sampler when the tilted Levy measure has finite mass.

    Write psi*(lam) = b lam + beta lam^2 - int (1 - e^{-lam y}) Pi*(dy) with
    Pi*(dy) = e^{-lam* y} Pi(dy) of total mass k. Between jumps the process
    is a quadratic CSBP killed at rate k per unit mass, whose semigroup solves
    U' = k - b U - beta U^2:

        U(g, theta) = U+ + w a / (1 + w c),   w = theta - U+,

    with D = sqrt(b^2 + 4 beta k), U+ = (D - b) / (2 beta), a = e^{-D g} and
    c = (beta / D)(1 - a). An excursion of length at least g either has no
    jump on [0, g] (measure a / (c (1 - U+ c)), mass at g exponential with
    mean c / (1 - U+ c)) or has a first jump at tau < g. The first-jump
    measure has total mass K(g) = U+ (1 - a / (1 - U+ c)) and, given tau, the
    pre-jump mass is Gamma(2, c_tau / (1 - U+ c_tau)) and the jump is drawn
    from Pi*/k. After the jump the process restarts from z + y, so a draw
    conditioned on X_g > 0 is an accept/reject over these two pieces,
    recursing into the conditioned transition for the remaining time.
    """

    backend = "jump-exact"

    def __init__(self, solver: SemigroupSolver, horizon: float, max_rounds: int = 10_000):
        super().__init__(solver, horizon)
        pi = solver.mech.pi
        self.jumps = pi
        self.shift = solver.lam_star
        b = solver.tilted.linear_coefficient
        self.k = float(pi.total_mass(tilt=self.shift)) if not pi.is_zero() else 0.0
        if not math.isfinite(self.k):
            raise CapabilityError("the jump-exact backend needs a finite tilted jump measure")
        self.D = math.sqrt(b * b + 4.0 * self.beta * self.k)
        self.u_plus = (self.D - b) / (2.0 * self.beta)
        self.gamma = self.u_plus * self.beta / self.D
        self.max_rounds = max_rounds
        self._s_floor = self.horizon * 1e-10
        self._vtable = solver.v_star_table(self._s_floor, self.horizon)

    def v_star(self, s):
        return self._vtable(np.maximum(np.asarray(s, dtype=float), self._s_floor))

    def _ac(self, g):
        a = np.exp(-self.D * g)
        return a, (self.beta / self.D) * -np.expm1(-self.D * g)

    def killed_laplace(self, g, theta):
        """U(g, theta): Laplace exponent of the jump-free, killed flow."""
        a, c = self._ac(np.asarray(g, dtype=float))
        w = theta - self.u_plus
        return self.u_plus + w * a / (1.0 + w * c)

    def no_jump_mass(self, g):
        a, c = self._ac(np.asarray(g, dtype=float))
        return a / (c * (1.0 - self.u_plus * c))

    def first_jump_mass(self, g):
        a, c = self._ac(np.asarray(g, dtype=float))
        return self.u_plus * (1.0 - a / (1.0 - self.u_plus * c))

    def _first_jump_time(self, g, rng):
        """tau with law proportional to the first-jump measure on [0, g]."""
        ratio = 1.0 - rng.random(g.shape) * self.first_jump_mass(g) / self.u_plus
        e = ratio * (1.0 - self.gamma) / (1.0 - ratio * self.gamma)
        return np.minimum(-np.log(e) / self.D, g)

    def _no_jump_scale(self, g):
        _, c = self._ac(g)
        return c / (1.0 - self.u_plus * c)

    def _no_jump_probability(self, g):
        if self.k == 0:
            return np.ones(np.shape(g))
        return np.clip(self.no_jump_mass(g) / self.v_star(g), 0.0, 1.0)

    def _sample_jump_excursions(self, g, rng):
        """Masses at g of excursions that jump before g, conditioned on X_g > 0."""
        out = np.empty(g.shape)
        todo = np.arange(g.size)
        for _ in range(self.max_rounds):
            if todo.size == 0:
                return out
            gi = g[todo]
            tau = self._first_jump_time(gi, rng)
            z = rng.gamma(2.0, self._no_jump_scale(tau))
            y = z + sample_tilted_jump(self.jumps, self.shift, todo.size, rng)
            rest = np.maximum(gi - tau, self._s_floor)
            keep = rng.random(todo.size) < -np.expm1(-y * self.v_star(rest))
            if np.any(keep):
                out[todo[keep]] = self.sample_cbstar_conditioned_positive(y[keep], rest[keep], rng)
            todo = todo[~keep]
        raise NumericalError("excursion sampler did not terminate")

    def sample_nstar_mass(self, s, rng):
        g = np.atleast_1d(self._check_gap(s)).astype(float)
        jumped = rng.random(g.size) >= self._no_jump_probability(g)
        out = rng.exponential(self._no_jump_scale(g))
        if np.any(jumped):
            out[jumped] = self._sample_jump_excursions(g[jumped], rng)
        return out

    def _sum_of_excursions(self, counts, s, rng):
        # jump-free excursions are i.i.d. exponential, so their sum is one gamma draw;
        # only the (few) excursions containing a jump are sampled individually
        n_jump = rng.binomial(counts, 1.0 - self._no_jump_probability(s))
        total = rng.gamma((counts - n_jump).astype(float), self._no_jump_scale(s))
        if n_jump.sum():
            total += sum_by_group(n_jump, self._sample_jump_excursions(np.repeat(s, n_jump), rng))
        return total

    def _check_gap(self, s):
        # the recursion may produce gaps below the table floor; they are clamped
        s = np.asarray(s, dtype=float)
        if np.any(s <= 0) or np.any(s > self.horizon * (1 + 1e-12)):
            raise DomainError(f"gap must lie in (0, {self.horizon}]")
        return np.maximum(s, self._s_floor)


# ---------------------------------------------------------------------------
# inversion backend
# ---------------------------------------------------------------------------

_LEVELS = np.concatenate([np.linspace(0.0, 0.99, 3960, endpoint=False), 1.0 - np.geomspace(1e-2, 1e-7, 2000)])


class InversionKernel(TransitionKernel):
    """Tabulated excursion-mass law for general jump families with beta > 0.

    For every gap node ``s_j`` the normalised mass Y = M / E[M] has
    characteristic function ``1 - u*_s(i w / E[M]) / v*_s``. u*_s is evaluated
    at all frequencies of all nodes in one vectorised complex ODE solve, in
    the reciprocal variable z = 1/u which is non-stiff at large |u|. The CDF
    on [0, L] follows from the Fourier cosine series through a type-I DST.
    """

    backend = "generic-inversion"

    def __init__(
        self,
        solver: SemigroupSolver,
        horizon: float,
        n_gaps: int = 48,
        n_terms: int = 2048,
        n_grid: int = 4096,
        min_gap_ratio: float = 1e-4,
        eps_inv: float = 1e-4,
        sd_span: float = 20.0,
    ):
        super().__init__(solver, horizon)
        self.eps_inv = eps_inv
        self.n_terms = n_terms
        self.n_grid = n_grid
        self.s_nodes = np.geomspace(horizon * min_gap_ratio, horizon, n_gaps)
        self._log_nodes = np.log(self.s_nodes)
        self._vtable = solver.v_star_table(horizon * 1e-10, horizon)
        self.levels = _LEVELS
        self._build(sd_span)

    # normalising constants ------------------------------------------------

    def v_star(self, s):
        return self._vtable(s)

    def excursion_mean(self, s):
        s = np.asarray(s, dtype=float)
        return np.exp(-self.q * s) / self.v_star(s)

    def excursion_second_moment(self, s):
        s = np.asarray(s, dtype=float)
        c2 = psi_second(self.solver.mech, self.solver.lam_star)
        return c2 * np.exp(-self.q * s) * -np.expm1(-self.q * s) / (self.q * self.v_star(s))

    # table construction ----------------------------------------------------

    def _char_fn(self, s_nodes, omegas, means):
        """phi_j(w_k) = E exp(i w_k Y_j) for every node j and frequency row k."""
        tilted = self.solver.tilted
        b = tilted.linear_coefficient
        beta = self.beta
        jumps = self.solver.mech.pi
        shift = self.solver.lam_star
        theta = -1j * omegas / means[:, None]
        z0 = (1.0 / theta).ravel()
        speed = np.repeat(s_nodes, omegas.shape[1])

        def rhs(_sigma, z):
            jump = z * z * jumps.laplace_jump(1.0 / z, tilt=shift)
            return speed * (b * z + beta + jump)

        res = integrate.solve_ivp(rhs, (0.0, 1.0), z0, method="DOP853", rtol=1e-10, atol=1e-14 * np.abs(z0))
        if not res.success:
            raise NumericalError(f"characteristic-function ODE failed: {res.message}")
        u = 1.0 / res.y[:, -1].reshape(omegas.shape)
        return 1.0 - u / self.v_star(s_nodes)[:, None]

    def _build(self, sd_span: float):
        s = self.s_nodes
        mean = self.excursion_mean(s)
        sd = np.sqrt(np.maximum(self.excursion_second_moment(s) / mean**2 - 1.0, 0.0))
        self.support = 1.0 + sd_span * np.maximum(sd, 1.0)
        k = np.arange(1, self.n_terms)
        omegas = np.pi * k[None, :] / self.support[:, None]
        phi = self._char_fn(s, omegas, mean)

        coef = 2.0 / (np.pi * k) * phi.real
        padded = np.zeros((s.size, self.n_grid - 1))
        padded[:, : k.size] = coef
        sines = 0.5 * fft.dst(padded, type=1, axis=1)
        frac = np.arange(self.n_grid + 1) / self.n_grid
        cdf = np.empty((s.size, self.n_grid + 1))
        cdf[:, 1:-1] = frac[None, 1:-1] + sines
        cdf[:, 0], cdf[:, -1] = 0.0, 1.0
        self.raw_cdf = cdf.copy()
        cdf = np.maximum.accumulate(np.clip(cdf, 0.0, 1.0), axis=1)
        self.cdf = cdf
        self.x_grid = frac[None, :] * self.support[:, None]

        self.quantiles = np.empty((s.size, self.levels.size))
        self.tail_rate = np.empty(s.size)
        for j in range(s.size):
            self.quantiles[j] = np.interp(self.levels, cdf[j], self.x_grid[j])
            q3, q5 = np.interp([1 - 1e-3, 1 - 1e-5], cdf[j], self.x_grid[j])
            self.tail_rate[j] = math.log(100.0) / max(q5 - q3, 1e-12)
        # mass beyond the table never exceeds the CDF inversion budget
        self.cdf_defect = float(np.max(np.abs(self.raw_cdf - self.cdf)))

    # sampling ----------------------------------------------------------------

    def normalised_quantile(self, s, u):
        """Interpolated quantile of E[M]^-1 M at level ``u`` for gap ``s``."""
        s = np.asarray(s, dtype=float)
        u = np.asarray(u, dtype=float)
        ls = np.clip(np.log(s), self._log_nodes[0], self._log_nodes[-1])
        j = np.clip(np.searchsorted(self._log_nodes, ls, side="right") - 1, 0, self.s_nodes.size - 2)
        w = (ls - self._log_nodes[j]) / (self._log_nodes[j + 1] - self._log_nodes[j])

        lev = self.levels
        top = lev[-1]
        uc = np.minimum(u, top)
        k = np.clip(np.searchsorted(lev, uc, side="right") - 1, 0, lev.size - 2)
        f = (uc - lev[k]) / (lev[k + 1] - lev[k])
        qt = self.quantiles

        def at(node):
            return qt[node, k] + f * (qt[node, k + 1] - qt[node, k])

        out = (1 - w) * at(j) + w * at(j + 1)
        beyond = u > top
        if np.any(beyond):
            rate = (1 - w[beyond]) * self.tail_rate[j[beyond]] + w[beyond] * self.tail_rate[j[beyond] + 1]
            out[beyond] += -np.log((1 - u[beyond]) / (1 - top)) / rate
        return out

    def sample_nstar_mass(self, s, rng):
        s = np.atleast_1d(self._check_gap(s))
        u = rng.random(s.shape)
        return self.excursion_mean(s) * self.normalised_quantile(s, u)

    def induced_laplace(self, node: int, theta: float) -> float:
        """Laplace transform of the tabulated excursion law at a grid node."""
        x = self.x_grid[node] * self.excursion_mean(self.s_nodes[node])
        dens = np.diff(self.cdf[node])
        mid = 0.5 * (x[1:] + x[:-1])
        return float(np.sum(dens * np.exp(-theta * mid)))


def make_kernel(solver: SemigroupSolver, horizon: float, backend: str = "auto", **kwargs) -> TransitionKernel:
    """Pick a backend: quadratic-exact when Pi = 0, jump-exact for finite jump measures."""
    if backend == "auto":
        backend = "quadratic-exact" if solver.mech.pi.is_zero() else "jump-exact"
    if backend == "quadratic-exact":
        return QuadraticKernel(solver, horizon)
    if backend == "jump-exact":
        return JumpExactKernel(solver, horizon, **kwargs)
    if backend == "generic-inversion":
        return InversionKernel(solver, horizon, **kwargs)
    raise CapabilityError(f"unknown kernel backend {backend!r}")
