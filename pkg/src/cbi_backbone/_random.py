from __future__ import annotations

import numpy as np
from scipy import special

from .errors import CapabilityError
from .mechanisms import CompoundExponential, FiniteAtoms, JumpMeasure


def truncated_poisson(rng: np.random.Generator, mean, kmin: int) -> np.ndarray:
    """Poisson(mean) conditioned on being >= kmin, elementwise.

    Rejection when the conditioning event has probability >= 0.1, otherwise
    sequential inversion of the conditional pmf (small means only).
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    out = np.empty(mean.shape, dtype=np.int64)
    if mean.size == 0:
        return out
    if np.any(mean <= 0):
        raise ValueError("truncated Poisson needs a positive mean")
    tail = special.gammainc(kmin, mean)  # P(N >= kmin)
    rej = tail >= 0.1

    idx = np.flatnonzero(rej)
    while idx.size:
        draw = rng.poisson(mean[idx])
        ok = draw >= kmin
        out[idx[ok]] = draw[ok]
        idx = idx[~ok]

    idx = np.flatnonzero(~rej)
    if idx.size:
        m = mean[idx]
        u = rng.random(idx.size)
        log_tail = np.log(tail[idx])
        k = np.full(idx.size, kmin, dtype=np.int64)
        cum = np.zeros(idx.size)
        active = np.ones(idx.size, dtype=bool)
        while np.any(active):
            a = np.flatnonzero(active)
            ka = k[a]
            pk = np.exp(ka * np.log(m[a]) - m[a] - special.gammaln(ka + 1.0) - log_tail[a])
            cum[a] += pk
            done = u[a] <= cum[a]
            # guard against round-off leaving u above the final cumulative sum
            done |= pk < 1e-17
            active[a[done]] = False
            k[a[~done]] += 1
        out[idx] = k
    return out.reshape(np.shape(mean))


def sum_by_group(counts: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Sum consecutive runs of ``values`` of lengths ``counts``."""
    owner = np.repeat(np.arange(counts.size), counts)
    return np.bincount(owner, weights=values, minlength=counts.size)


def sample_poisson_mixture(measure: JumpMeasure, lam: float, kmin: int, size: int, rng: np.random.Generator):
    """Draw (n, y) from the measure proportional to (lam y)^n / n! e^{-lam y} M(dy), n >= kmin."""
    if isinstance(measure, FiniteAtoms):
        x = measure.locations
        w = measure.masses * special.gammainc(kmin, lam * x)
        atom = rng.choice(x.size, size=size, p=w / w.sum())
        n = truncated_poisson(rng, lam * x[atom], kmin)
        return n, x[atom]
    if isinstance(measure, CompoundExponential):
        # n is geometric with ratio lam/(lam+mu); y | n is Gamma(n+1, lam+mu)
        a = lam + measure.scale
        n = kmin - 1 + rng.geometric(measure.scale / a, size=size)
        return n.astype(np.int64), rng.gamma(n + 1.0, 1.0 / a)
    raise CapabilityError(f"no sampler for {type(measure).__name__}")


def sample_survival_weighted(measure: JumpMeasure, power: int, shift: float, v: np.ndarray, rng: np.random.Generator):
    """Draw y from y^power e^{-shift y} (1 - e^{-y v}) M(dy), one draw per entry of ``v``."""
    v = np.asarray(v, dtype=float)
    if isinstance(measure, FiniteAtoms):
        x = measure.locations
        w = measure.masses * x**power * np.exp(-shift * x) * -np.expm1(-np.multiply.outer(v, x))
        cum = np.cumsum(w, axis=1)
        u = rng.random(v.size) * cum[:, -1]
        idx = np.minimum((cum < u[:, None]).sum(axis=1), x.size - 1)
        return x[idx]
    if isinstance(measure, CompoundExponential):
        a = measure.scale + shift
        out = np.empty(v.size)
        todo = np.arange(v.size)
        while todo.size:
            vv = v[todo]
            big = vv >= a
            # proposal Gamma(power+1) accepted w.p. 1-e^{-vy}, or Gamma(power+2)
            # accepted w.p. (1-e^{-vy})/(vy), whichever has the better rate
            shape = np.where(big, power + 1.0, power + 2.0)
            y = rng.gamma(shape, 1.0 / a)
            acc = -np.expm1(-vv * y)
            acc = np.where(big, acc, acc / (vv * y))
            ok = rng.random(todo.size) < acc
            out[todo[ok]] = y[ok]
            todo = todo[~ok]
        return out
    raise CapabilityError(f"no sampler for {type(measure).__name__}")


def sample_tilted_jump(measure: JumpMeasure, tilt: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Jump sizes from the probability measure proportional to e^{-tilt y} M(dy)."""
    if isinstance(measure, FiniteAtoms):
        x = measure.locations
        w = measure.masses * np.exp(-tilt * x)
        return x[rng.choice(x.size, size=size, p=w / w.sum())]
    if isinstance(measure, CompoundExponential):
        return rng.exponential(1.0 / (measure.scale + tilt), size=size)
    raise CapabilityError(f"no sampler for {type(measure).__name__}")
