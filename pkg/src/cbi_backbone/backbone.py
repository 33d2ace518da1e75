"""Pathwise construction of the dressed Galton-Watson process with immigration.

The simulator works on batches of independent replicates held in flat numpy
arrays (``ForestBatch``); a single ``BackboneForest`` is a batch of size one
converted to records. Fixed-time marginals (Z_t, Lambda_t) are produced by

* a Poisson(lam* x) number of initial backbone individuals and a Poisson
  process of immigration events at rate p = phi(lam*);
* exponential(q) lifetimes with offspring and graft mass drawn from p_n(dy),
  immigrant counts and graft mass from pi_n(dy);
* grafted (psi*, 0)-CSBP copies at time zero, at branch points and at
  immigration events, evolved to the horizon by the transition kernel;
* Poissonian dressing along lifelines and along the immigration time-line,
  of which only the grafts still alive at the horizon are generated.

The excursion part of the dressing has intensity c v*_{t - tau} which is not
integrable at tau = t. Gaps below ``window`` on segments reaching the horizon
are therefore aggregated: their total mass has Laplace transform
(1 + theta b(window))^(-c/beta), i.e. a Gamma law, exact for Pi = 0.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from ._random import sample_poisson_mixture, sample_survival_weighted
from .errors import CapabilityError, DomainError, InvariantViolation, NStarUndefinedError, PopulationBlowupError
from .kernels import TransitionKernel, make_kernel
from .semigroup import SemigroupSolver

__all__ = [
    "Individual",
    "BranchEvent",
    "ImmigrationEvent",
    "DressingRecord",
    "BackboneForest",
    "ForestBatch",
    "BackboneSimulator",
    "simulate_samples",
    "CHUNK_SIZE",
]

CHUNK_SIZE = 2048
DEFAULT_GUARD = 10**7


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Individual:
    id: int
    parent: int | None
    root: str | None  # "initial" or "immigration:<k>" for roots, None otherwise
    birth: float
    death: float | None  # None means alive at the horizon


@dataclass(frozen=True)
class BranchEvent:
    individual: int
    time: float
    offspring: int
    graft_mass: float


@dataclass(frozen=True)
class ImmigrationEvent:
    time: float
    immigrants: int
    graft_mass: float


@dataclass(frozen=True)
class DressingRecord:
    location: str  # "initial", "branch:<id>", "immigration:<k>", "lifeline:<id>" or "spine"
    time: float | None  # graft time; None for the aggregated horizon window
    mass: float  # contribution at the horizon
    source: str  # "graft", "excursion", "excursion-window" or "tilted-jump:<seed mass>"


@dataclass
class BackboneForest:
    horizon: float
    initial_mass: float
    individuals: list[Individual] = field(default_factory=list)
    branch_events: list[BranchEvent] = field(default_factory=list)
    immigration_events: list[ImmigrationEvent] = field(default_factory=list)
    dressing: list[DressingRecord] = field(default_factory=list)

    def alive_count(self) -> int:
        return sum(1 for ind in self.individuals if ind.death is None)

    def check_invariants(self) -> None:
        """Raise ``InvariantViolation`` if the genealogy is inconsistent."""
        by_id = {ind.id: ind for ind in self.individuals}
        if len(by_id) != len(self.individuals):
            raise InvariantViolation("duplicate individual ids")
        children: dict[int, int] = {}
        for ind in self.individuals:
            if ind.death is not None and not ind.death > ind.birth:
                raise InvariantViolation(f"individual {ind.id} dies before it is born")
            if ind.death is not None and ind.death >= self.horizon:
                raise InvariantViolation(f"individual {ind.id} dies after the horizon")
            if ind.parent is None:
                if ind.root is None:
                    raise InvariantViolation(f"root {ind.id} has no root tag")
                continue
            parent = by_id.get(ind.parent)
            if parent is None or parent.death != ind.birth:
                raise InvariantViolation(f"individual {ind.id} not born at its parent's death")
            children[ind.parent] = children.get(ind.parent, 0) + 1
        for ev in self.branch_events:
            if ev.offspring < 2:
                raise InvariantViolation("branch event with fewer than two offspring")
            if children.get(ev.individual, 0) != ev.offspring:
                raise InvariantViolation(f"offspring count mismatch at {ev.individual}")
            if by_id[ev.individual].death != ev.time:
                raise InvariantViolation("branch event not at the death time")
        if len(self.branch_events) != sum(1 for i in self.individuals if i.death is not None):
            raise InvariantViolation("every death must be a branch event")
        for k, ev in enumerate(self.immigration_events):
            if ev.immigrants < 1:
                raise InvariantViolation("immigration event without immigrants")
            tag = f"immigration:{k}"
            n = sum(1 for i in self.individuals if i.root == tag and i.birth == ev.time)
            if n != ev.immigrants:
                raise InvariantViolation(f"immigrant count mismatch at event {k}")
        # alive = roots alive + descendants alive, counted through the genealogy
        alive_by_walk = 0
        stack = [i.id for i in self.individuals if i.parent is None]
        kids: dict[int, list[int]] = {}
        for ind in self.individuals:
            if ind.parent is not None:
                kids.setdefault(ind.parent, []).append(ind.id)
        while stack:
            node = stack.pop()
            if by_id[node].death is None:
                alive_by_walk += 1
            stack.extend(kids.get(node, ()))
        if alive_by_walk != self.alive_count():
            raise InvariantViolation("alive count disagrees with the genealogy")

    def to_records(self) -> list[dict]:
        """Line-delimited export: one dict per individual, event or dressing graft."""
        recs: list[dict] = [{"record": "forest", "horizon": self.horizon, "initial_mass": self.initial_mass}]
        for ind in self.individuals:
            recs.append({"record": "individual", **ind.__dict__})
        for ev in self.branch_events:
            recs.append({"record": "branch", **ev.__dict__})
        for ev in self.immigration_events:
            recs.append({"record": "immigration", **ev.__dict__})
        for d in self.dressing:
            recs.append({"record": "dressing", **d.__dict__})
        return recs


@dataclass
class ForestBatch:
    """Flat-array genealogy of ``n`` independent replicates."""

    n: int
    horizon: float
    initial_mass: float
    ind_rep: np.ndarray
    ind_parent: np.ndarray  # -1 for roots
    ind_root: np.ndarray  # -1 non-root, 0 initial, k+1 immigration event k (batch index)
    ind_birth: np.ndarray
    ind_death: np.ndarray  # inf when alive at the horizon
    br_rep: np.ndarray
    br_ind: np.ndarray
    br_time: np.ndarray
    br_n: np.ndarray
    br_y: np.ndarray
    im_rep: np.ndarray
    im_time: np.ndarray
    im_n: np.ndarray
    im_y: np.ndarray

    @classmethod
    def empty(cls, n: int, horizon: float, initial_mass: float = 0.0) -> "ForestBatch":
        f, i = np.zeros(0), np.zeros(0, dtype=np.int64)
        return cls(n, horizon, initial_mass, i, i, i, f, f, i, i, f, i, f, i, f, i, f)

    def alive_counts(self) -> np.ndarray:
        alive = np.isinf(self.ind_death)
        return np.bincount(self.ind_rep[alive], minlength=self.n)

    def forest(self, k: int = 0) -> BackboneForest:
        sel = np.flatnonzero(self.ind_rep == k)
        local = {int(g): j for j, g in enumerate(sel)}
        im_sel = np.flatnonzero(self.im_rep == k)
        im_local = {int(g): j for j, g in enumerate(im_sel)}
        inds = []
        for g in sel:
            parent = int(self.ind_parent[g])
            root = int(self.ind_root[g])
            tag = None if root < 0 else ("initial" if root == 0 else f"immigration:{im_local[root - 1]}")
            death = float(self.ind_death[g])
            inds.append(
                Individual(
                    local[int(g)],
                    None if parent < 0 else local[parent],
                    tag,
                    float(self.ind_birth[g]),
                    None if math.isinf(death) else death,
                )
            )
        br = [
            BranchEvent(local[int(self.br_ind[e])], float(self.br_time[e]), int(self.br_n[e]), float(self.br_y[e]))
            for e in np.flatnonzero(self.br_rep == k)
        ]
        im = [ImmigrationEvent(float(self.im_time[e]), int(self.im_n[e]), float(self.im_y[e])) for e in im_sel]
        return BackboneForest(self.horizon, self.initial_mass, inds, br, im)

    @classmethod
    def from_forest(cls, forest: BackboneForest) -> "ForestBatch":
        inds = forest.individuals
        index = {ind.id: j for j, ind in enumerate(inds)}
        root_code = []
        for ind in inds:
            if ind.root is None:
                root_code.append(-1)
            elif ind.root == "initial":
                root_code.append(0)
            else:
                root_code.append(int(ind.root.split(":")[1]) + 1)
        i64 = lambda xs: np.asarray(xs, dtype=np.int64)  # noqa: E731
        f64 = lambda xs: np.asarray(xs, dtype=float)  # noqa: E731
        br, im = forest.branch_events, forest.immigration_events
        return cls(
            1,
            forest.horizon,
            forest.initial_mass,
            i64([0] * len(inds)),
            i64([-1 if i.parent is None else index[i.parent] for i in inds]),
            i64(root_code),
            f64([i.birth for i in inds]),
            f64([math.inf if i.death is None else i.death for i in inds]),
            i64([0] * len(br)),
            i64([index[e.individual] for e in br]),
            f64([e.time for e in br]),
            i64([e.offspring for e in br]),
            f64([e.graft_mass for e in br]),
            i64([0] * len(im)),
            f64([e.time for e in im]),
            i64([e.immigrants for e in im]),
            f64([e.graft_mass for e in im]),
        )


# ---------------------------------------------------------------------------
# simulator
# ---------------------------------------------------------------------------


class BackboneSimulator:
    """Samples (Z_t, Lambda_t) for a validated (psi, phi) pair.

    Parameters
    ----------
    solver : SemigroupSolver
    horizon : float
        Largest time the simulator will be asked for; kernel tables cover (0, horizon].
    backend : str
        ``auto``, ``quadratic-exact``, ``jump-exact`` or ``generic-inversion``.
    window : float
        Gap below which horizon-reaching excursion dressing is aggregated.
    population_guard : int
        Maximum number of backbone individuals per batch.
    """

    def __init__(
        self,
        solver: SemigroupSolver,
        horizon: float,
        backend: str = "auto",
        window: float = 1e-3,
        population_guard: int = DEFAULT_GUARD,
        kernel: TransitionKernel | None = None,
        **kernel_kwargs,
    ):
        self.solver = solver
        self.mech, self.imm = solver.mech, solver.imm
        self.horizon = float(horizon)
        self.lam_star, self.q, self.p = solver.lam_star, solver.q, solver.p
        if self.imm.delta > 0 and self.mech.beta == 0:
            raise NStarUndefinedError("delta > 0 needs the excursion measure, which requires beta > 0")
        self.kernel = kernel if kernel is not None else make_kernel(solver, horizon, backend, **kernel_kwargs)
        self.window = float(window)
        self.guard = int(population_guard)
        self.gap_floor = 1e-9 * self.horizon
        ls = self.lam_star
        self._p_binary = 1.0 if self.mech.pi.is_zero() else self.mech.beta * ls / self.q
        self._p_single = 1.0 if self.imm.nu.is_zero() else (self.imm.delta * ls / self.p if self.p > 0 else 0.0)

    # -- events ------------------------------------------------------------

    def sample_branch_events(self, rng: np.random.Generator, size: int):
        """Offspring count and branch-point graft mass, vectorised."""
        n = np.full(size, 2, dtype=np.int64)
        y = np.zeros(size)
        if self._p_binary < 1.0 and size:
            jump = rng.random(size) >= self._p_binary
            k = int(jump.sum())
            if k:
                n[jump], y[jump] = sample_poisson_mixture(self.mech.pi, self.lam_star, 2, k, rng)
        return n, y

    def sample_immigration_events(self, rng: np.random.Generator, size: int):
        if self.p <= 0:
            raise DomainError("immigration is disabled (p = 0)")
        n = np.ones(size, dtype=np.int64)
        y = np.zeros(size)
        if self._p_single < 1.0 and size:
            jump = rng.random(size) >= self._p_single
            k = int(jump.sum())
            if k:
                n[jump], y[jump] = sample_poisson_mixture(self.imm.nu, self.lam_star, 1, k, rng)
        return n, y

    def sample_branch_event(self, rng: np.random.Generator) -> tuple[int, float]:
        n, y = self.sample_branch_events(rng, 1)
        return int(n[0]), float(y[0])

    def sample_immigration_event(self, rng: np.random.Generator) -> tuple[int, float]:
        n, y = self.sample_immigration_events(rng, 1)
        return int(n[0]), float(y[0])

    # -- backbone ----------------------------------------------------------

    def _check_time(self, t: float) -> None:
        if not 0 <= t <= self.horizon:
            raise DomainError(f"t must lie in [0, {self.horizon}]")

    def simulate_batch(self, x: float, t: float, n: int, rng: np.random.Generator) -> ForestBatch:
        """Backbone genealogies of ``n`` independent replicates up to time ``t``."""
        self._check_time(t)
        if x < 0:
            raise DomainError("x must be >= 0")
        n0 = rng.poisson(self.lam_star * x, size=n)
        if self.p > 0 and t > 0:
            n_im = rng.poisson(self.p * t, size=n)
            im_rep = np.repeat(np.arange(n), n_im)
            im_time = rng.uniform(0.0, t, size=im_rep.size)
            im_n, im_y = self.sample_immigration_events(rng, im_rep.size)
        else:
            im_rep = np.zeros(0, dtype=np.int64)
            im_time, im_n, im_y = np.zeros(0), np.zeros(0, dtype=np.int64), np.zeros(0)

        # frontier = individuals whose lifetime is still to be drawn
        f_rep = np.concatenate([np.repeat(np.arange(n), n0), np.repeat(im_rep, im_n)])
        f_birth = np.concatenate([np.zeros(int(n0.sum())), np.repeat(im_time, im_n)])
        f_parent = np.full(f_rep.size, -1, dtype=np.int64)
        f_root = np.concatenate(
            [np.zeros(int(n0.sum()), dtype=np.int64), np.repeat(np.arange(im_rep.size) + 1, im_n)]
        )

        reps, parents, roots, births, deaths = [], [], [], [], []
        br = {"rep": [], "ind": [], "time": [], "n": [], "y": []}
        next_id = 0
        while f_rep.size:
            ids = np.arange(next_id, next_id + f_rep.size)
            next_id += f_rep.size
            if next_id > self.guard:
                raise PopulationBlowupError(
                    f"supercritical blow-up: more than {self.guard} backbone individuals; horizon too large"
                )
            death = f_birth + rng.exponential(1.0 / self.q, size=f_rep.size)
            branching = death < t
            reps.append(f_rep)
            parents.append(f_parent)
            roots.append(f_root)
            births.append(f_birth)
            deaths.append(np.where(branching, death, np.inf))

            b_idx = np.flatnonzero(branching)
            bn, by = self.sample_branch_events(rng, b_idx.size)
            br["rep"].append(f_rep[b_idx])
            br["ind"].append(ids[b_idx])
            br["time"].append(death[b_idx])
            br["n"].append(bn)
            br["y"].append(by)

            f_rep = np.repeat(f_rep[b_idx], bn)
            f_birth = np.repeat(death[b_idx], bn)
            f_parent = np.repeat(ids[b_idx], bn)
            f_root = np.full(f_rep.size, -1, dtype=np.int64)

        def cat(xs, dtype=float):
            return np.concatenate(xs).astype(dtype) if xs else np.zeros(0, dtype=dtype)

        return ForestBatch(
            n,
            t,
            x,
            cat(reps, np.int64),
            cat(parents, np.int64),
            cat(roots, np.int64),
            cat(births),
            cat(deaths),
            cat(br["rep"], np.int64),
            cat(br["ind"], np.int64),
            cat(br["time"]),
            cat(br["n"], np.int64),
            cat(br["y"]),
            im_rep.astype(np.int64),
            im_time,
            im_n.astype(np.int64),
            im_y,
        )

    def simulate_forest(self, x: float, t: float, rng: np.random.Generator) -> BackboneForest:
        return self.simulate_batch(x, t, 1, rng).forest(0)

    # -- dressing ------------------------------------------------------------

    def _edges(self, lo: float, hi: float) -> np.ndarray:
        """Geometric gap-bin edges anchored at ``window`` and covering [lo, hi]."""
        w = self.window
        k0 = math.floor(math.log2(lo / w))
        k1 = math.ceil(math.log2(hi / w))
        return w * 2.0 ** np.arange(k0, k1 + 1)

    def thin(self, seg_lo, seg_hi, rate, rate_at_zero, rng):
        """Points of a Poisson process with intensity ``rate(v*_s)`` on gap segments.

        ``rate`` is decreasing in the gap, so each geometric bin is dominated by
        its value at the bin's lower edge. Returns (segment index, gap).
        """
        seg_lo = np.asarray(seg_lo, dtype=float)
        seg_hi = np.asarray(seg_hi, dtype=float)
        keep = seg_hi > seg_lo
        if not np.any(keep):
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        lo_min = seg_lo[keep].min()
        if lo_min > 0:
            edges = self._edges(lo_min, seg_hi[keep].max())
        else:
            pos = seg_lo[keep & (seg_lo > 0)]
            first = max(min(self.window, pos.min()), self.gap_floor) if pos.size else self.window
            edges = np.concatenate([[0.0], self._edges(first, max(seg_hi[keep].max(), first * 2))])
        segs, gaps = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            overlap = np.minimum(seg_hi, b) - np.maximum(seg_lo, a)
            idx = np.flatnonzero(overlap > 0)
            if idx.size == 0:
                continue
            bound = rate_at_zero if a == 0 else float(rate(self.kernel.v_star(a)))
            if bound <= 0:
                continue
            counts = rng.poisson(bound * overlap[idx])
            owner = np.repeat(idx, counts)
            start = np.maximum(seg_lo[owner], a)
            s = start + rng.random(owner.size) * np.repeat(overlap[idx], counts)
            accept = rng.random(owner.size) * bound < rate(self.kernel.v_star(np.maximum(s, self.gap_floor)))
            segs.append(owner[accept])
            gaps.append(s[accept])
        if not segs:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        return np.concatenate(segs), np.concatenate(gaps)

    def _window_scale(self, gap):
        return (self.mech.beta / self.q) * -np.expm1(-self.q * np.asarray(gap, dtype=float))

    def _dress_component(self, seg_lo, seg_hi, coeff, measure, power, rng):
        """Excursion (coefficient ``coeff``) and tilted-jump dressing on gap segments.

        Returns (segment index, gap, mass, source code) with source 0 = excursion,
        1 = aggregated window, 2 = tilted jump; plus the jump seed masses.
        """
        kernel, ls = self.kernel, self.lam_star
        out_seg, out_gap, out_mass, out_src, out_seed = [], [], [], [], []
        if coeff > 0:
            if self.mech.beta <= 0:
                raise NStarUndefinedError("excursion dressing needs beta > 0")
            reach = seg_lo <= 0
            lo = np.where(reach, np.minimum(self.window, seg_hi), np.maximum(seg_lo, self.gap_floor))
            seg, gap = self.thin(lo, seg_hi, lambda v: coeff * v, math.inf, rng)
            out_seg.append(seg)
            out_gap.append(gap)
            out_mass.append(kernel.sample_nstar_mass(gap, rng) if gap.size else np.zeros(0))
            out_src.append(np.zeros(gap.size, dtype=np.int8))
            out_seed.append(np.zeros(gap.size))
            widx = np.flatnonzero(reach)
            wgap = np.minimum(self.window, seg_hi[widx])
            out_seg.append(widx)
            out_gap.append(np.zeros(widx.size))
            out_mass.append(rng.gamma(coeff / self.mech.beta, self._window_scale(wgap)))
            out_src.append(np.ones(widx.size, dtype=np.int8))
            out_seed.append(np.zeros(widx.size))
        if not measure.is_zero():
            rate = lambda v: measure.one_minus_exp(v, tilt=ls, power=power)  # noqa: E731
            at_zero = float(measure.one_minus_exp(np.inf, tilt=ls, power=power))
            seg, gap = self.thin(seg_lo, seg_hi, rate, at_zero, rng)
            gap = np.maximum(gap, self.gap_floor)
            v = kernel.v_star(gap)
            seed = sample_survival_weighted(measure, power, ls, v, rng) if gap.size else np.zeros(0)
            mass = kernel.sample_cbstar_conditioned_positive(seed, gap, rng) if gap.size else np.zeros(0)
            out_seg.append(seg)
            out_gap.append(gap)
            out_mass.append(mass)
            out_src.append(np.full(gap.size, 2, dtype=np.int8))
            out_seed.append(seed)
        if not out_seg:
            z = np.zeros(0)
            return np.zeros(0, dtype=np.int64), z, z, np.zeros(0, dtype=np.int8), z
        return tuple(np.concatenate(a) for a in (out_seg, out_gap, out_mass, out_src, out_seed))

    def dress_batch(self, batch: ForestBatch, rng: np.random.Generator, keep_records: bool = False):
        """Z_t and Lambda_t for every replicate of ``batch``."""
        t, n, kernel = batch.horizon, batch.n, self.kernel
        self._check_time(t)
        lam = np.zeros(n)
        records = [] if keep_records else None

        def add(rep, mass, labels=None, tau=None, src=None, seed=None):
            np.add.at(lam, rep, mass)
            if keep_records:
                for k in range(mass.size):
                    source = "graft" if src is None else _SOURCES[int(src[k])]
                    if source == "tilted-jump":
                        source = f"tilted-jump:{float(seed[k]):.17g}"
                    when = None if tau is None or source == "excursion-window" else float(tau[k])
                    records.append(DressingRecord(labels[k], when, float(mass[k]), source))

        if t == 0:
            z = batch.alive_counts()
            lam[:] = batch.initial_mass
            return (z, lam, records) if keep_records else (z, lam)

        if batch.initial_mass > 0:
            add(np.arange(n), kernel.sample_cbstar_transition(np.full(n, batch.initial_mass), t, rng), ["initial"] * n, np.zeros(n))

        g = np.flatnonzero(batch.br_y > 0)
        if g.size:
            mass = kernel.sample_cbstar_transition(batch.br_y[g], t - batch.br_time[g], rng)
            add(batch.br_rep[g], mass, [f"branch:{int(i)}" for i in batch.br_ind[g]] if keep_records else None,
                batch.br_time[g])
        g = np.flatnonzero(batch.im_y > 0)
        if g.size:
            mass = kernel.sample_cbstar_transition(batch.im_y[g], t - batch.im_time[g], rng)
            add(batch.im_rep[g], mass, [f"immigration:{int(i)}" for i in g] if keep_records else None, batch.im_time[g])

        # lifelines
        if batch.ind_rep.size:
            s_lo = np.where(np.isinf(batch.ind_death), 0.0, t - batch.ind_death)
            s_hi = t - batch.ind_birth
            seg, gap, mass, src, seed = self._dress_component(s_lo, s_hi, 2 * self.mech.beta, self.mech.pi, 1, rng)
            labels = [f"lifeline:{int(i)}" for i in seg] if keep_records else None
            add(batch.ind_rep[seg], mass, labels, t - gap, src, seed)

        # immigration time-line
        if self.imm.enabled:
            s_lo, s_hi = np.zeros(n), np.full(n, t)
            seg, gap, mass, src, seed = self._dress_component(s_lo, s_hi, self.imm.delta, self.imm.nu, 0, rng)
            add(seg, mass, ["spine"] * seg.size if keep_records else None, t - gap, src, seed)

        z = batch.alive_counts()
        if keep_records:
            return z, lam, records
        return z, lam

    def dress_and_mass(self, forest: BackboneForest, rng: np.random.Generator) -> tuple[int, float]:
        """(Z_t, Lambda_t) for one forest; dressing records are attached to ``forest``."""
        batch = ForestBatch.from_forest(forest)
        z, lam, records = self.dress_batch(batch, rng, keep_records=True)
        forest.dressing = records
        return int(z[0]), float(lam[0])

    def sample_joint(self, x: float, t: float, rng: np.random.Generator) -> tuple[int, float]:
        z, lam = self.sample_batch(x, t, 1, rng)
        return int(z[0]), float(lam[0])

    def sample_batch(self, x: float, t: float, n: int, rng: np.random.Generator):
        """Arrays (Z_t, Lambda_t) of ``n`` independent replicates."""
        return self.dress_batch(self.simulate_batch(x, t, n, rng), rng)

    def sample_spine_only(self, t: float, n: int, rng: np.random.Generator) -> np.ndarray:
        """Mass from the immigration time-line dressing alone (no backbone, x = 0)."""
        _z, lam = self.dress_batch(ForestBatch.empty(n, t), rng)
        return lam


_SOURCES = ("excursion", "excursion-window", "tilted-jump")


def simulate_samples(
    sim: BackboneSimulator, x: float, t: float, n: int, seed: int, threads: int = 1, chunk: int = CHUNK_SIZE
):
    """(Z, Lambda) arrays for ``n`` replicates, reproducible for a given ``seed``.

    Replicates are cut into fixed-size chunks, chunk ``i`` draws from the
    stream ``SeedSequence(seed, spawn_key=(i,))``, and chunks are reassembled
    in index order; the output does not depend on ``threads``.
    """
    if n <= 0:
        raise DomainError("need at least one replicate")
    sizes = [min(chunk, n - i) for i in range(0, n, chunk)]

    def run(i):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        return sim.sample_batch(x, t, sizes[i], rng)

    if threads <= 1:
        parts = [run(i) for i in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])
