import dataclasses
import math

import numpy as np
import pytest
from scipy import integrate

from cbi_backbone.backbone import BackboneForest, BackboneSimulator, ForestBatch, simulate_samples
from cbi_backbone.errors import DomainError, InvariantViolation, NStarUndefinedError, PopulationBlowupError
from cbi_backbone.mechanisms import BranchingMechanism, CompoundExponential, ImmigrationMechanism, ZeroMeasure
from cbi_backbone.semigroup import SemigroupSolver
from cbi_backbone.verify import campbell_spine_check, mc_joint_laplace

from conftest import QUAD

N = 100_000


# hand-written psi, psi' and phi of the atom family, independent of the package;
# the compensator lam x is only applied to jumps x < 1
ATOM_JUMPS = ((2.0, 1.0), (0.5, 2.0))


def psi_atoms(lam):
    return 0.5 * lam + 0.5 * lam**2 + sum(m * (math.exp(-lam * x) - 1 + lam * x * (x < 1)) for x, m in ATOM_JUMPS)


def psi_prime_atoms(lam):
    return 0.5 + lam + sum(m * x * ((x < 1) - math.exp(-lam * x)) for x, m in ATOM_JUMPS)


def phi_atoms(lam):
    return 0.5 * lam + (1 - math.exp(-lam))


def z_of(values, target):
    return (values.mean() - target) / (values.std(ddof=1) / math.sqrt(values.size))


def test_quadratic_backbone_is_binary_without_grafts(quad_sim):
    rng = np.random.default_rng(0)
    n, y = quad_sim.sample_branch_events(rng, 1000)
    assert np.all(n == 2) and np.all(y == 0)
    n, y = quad_sim.sample_immigration_events(rng, 1000)
    assert np.all(n == 1) and np.all(y == 0)
    assert quad_sim.sample_branch_event(rng) == (2, 0.0)


def test_branch_event_law(atoms_sim):
    # E[r^N e^{-theta Y}] = [psi(theta + ls(1-r)) - psi(theta + ls) + ls r psi'(theta + ls)] / (ls q)
    rng = np.random.default_rng(1)
    ls, q = atoms_sim.lam_star, atoms_sim.q
    assert psi_atoms(ls) == pytest.approx(0.0, abs=1e-12)
    assert psi_prime_atoms(ls) == pytest.approx(q, rel=1e-12)
    n, y = atoms_sim.sample_branch_events(rng, N)
    assert n.min() >= 2
    for r in (0.0, 0.3, 0.8):
        for th in (0.0, 0.5, 2.0):
            target = (psi_atoms(th + ls * (1 - r)) - psi_atoms(th + ls) + ls * r * psi_prime_atoms(th + ls)) / (ls * q)
            vals = r**n * np.exp(-th * y)
            if r == 0:
                # P(N = 0) = 0 exactly
                assert target == pytest.approx(0.0, abs=1e-12) and np.all(vals == 0)
            else:
                assert abs(z_of(vals, target)) < 4


def test_binary_branching_probability(atoms_sim):
    # p_2 = (beta ls^2 + sum m (ls x)^2 / 2 e^{-ls x}) / (ls q)
    rng = np.random.default_rng(2)
    ls, q = atoms_sim.lam_star, atoms_sim.q
    p2 = (0.5 * ls**2 + sum(m * (ls * x) ** 2 / 2 * math.exp(-ls * x) for x, m in ATOM_JUMPS)) / (ls * q)
    n, _ = atoms_sim.sample_branch_events(rng, N)
    freq = np.mean(n == 2)
    assert abs(freq - p2) < 4 * math.sqrt(p2 * (1 - p2) / N)


def test_immigration_event_law(atoms_sim):
    # E[r^N e^{-theta Y}] = [phi(theta + ls) - phi(theta + ls(1-r))] / p
    rng = np.random.default_rng(3)
    ls, p = atoms_sim.lam_star, atoms_sim.p
    assert p == pytest.approx(phi_atoms(ls), rel=1e-12)
    n, y = atoms_sim.sample_immigration_events(rng, N)
    assert n.min() >= 1
    for r in (0.2, 0.7):
        for th in (0.0, 1.0):
            target = (phi_atoms(th + ls) - phi_atoms(th + ls * (1 - r))) / p
            assert abs(z_of(r**n * np.exp(-th * y), target)) < 4


def test_genealogy_invariants_hold(atoms_sim):
    rng = np.random.default_rng(4)
    batch = atoms_sim.simulate_batch(1.5, 1.0, 1000, rng)
    alive = batch.alive_counts()
    for k in range(1000):
        forest = batch.forest(k)
        forest.check_invariants()
        assert forest.alive_count() == alive[k]
        assert len(forest.immigration_events) == np.sum(batch.im_rep == k)


def test_forest_batch_round_trip(atoms_sim):
    rng = np.random.default_rng(5)
    forest = atoms_sim.simulate_forest(2.0, 1.0, rng)
    again = ForestBatch.from_forest(forest).forest(0)
    assert again == forest


def _small_forest():
    batch_rng = np.random.default_rng(8)
    sim = BackboneSimulator(SemigroupSolver(QUAD, ImmigrationMechanism(1.0)), 1.0)
    while True:
        forest = sim.simulate_forest(2.0, 1.0, batch_rng)
        if forest.branch_events and forest.immigration_events:
            return forest


def test_invariant_violations_are_detected():
    forest = _small_forest()
    forest.check_invariants()
    ev = forest.branch_events[0]
    broken = dataclasses.replace(forest, branch_events=[dataclasses.replace(ev, offspring=1)] + forest.branch_events[1:])
    with pytest.raises(InvariantViolation):
        broken.check_invariants()
    child = next(i for i in forest.individuals if i.parent is not None)
    shifted = [dataclasses.replace(i, birth=i.birth + 1e-3) if i is child else i for i in forest.individuals]
    with pytest.raises(InvariantViolation):
        dataclasses.replace(forest, individuals=shifted).check_invariants()
    im = forest.immigration_events[0]
    extra = [dataclasses.replace(im, immigrants=im.immigrants + 1)] + forest.immigration_events[1:]
    with pytest.raises(InvariantViolation):
        dataclasses.replace(forest, immigration_events=extra).check_invariants()


def test_time_zero_marginal(quad_sim):
    rng = np.random.default_rng(6)
    z, lam = quad_sim.sample_batch(0.7, 0.0, N, rng)
    assert np.all(lam == 0.7)
    p0 = math.exp(-0.7)
    assert abs(np.mean(z == 0) - p0) < 4 * math.sqrt(p0 * (1 - p0) / N)


def test_empty_configurations(quad_solver):
    solver = SemigroupSolver(QUAD, ImmigrationMechanism(0.0))
    sim = BackboneSimulator(solver, 1.0)
    rng = np.random.default_rng(7)
    z, lam = sim.sample_batch(0.0, 1.0, 500, rng)
    assert np.all(z == 0) and np.all(lam == 0)
    assert np.all(sim.sample_spine_only(1.0, 100, rng) == 0)
    z, lam = sim.dress_batch(ForestBatch.empty(3, 1.0), rng)
    assert z.tolist() == [0, 0, 0] and lam.tolist() == [0, 0, 0]


def test_mean_without_immigration():
    # E[X_1] = x e^{-alpha} = e for psi = lam^2 - lam, and E[Z] = lam* E[Lambda]
    sim = BackboneSimulator(SemigroupSolver(QUAD, ImmigrationMechanism(0.0)), 1.0)
    z, lam = simulate_samples(sim, 1.0, 1.0, N, seed=9)
    assert abs(z_of(lam, math.e)) < 4
    assert abs(z_of(z.astype(float), math.e)) < 4


@pytest.mark.parametrize("name", ["atoms_sim", "cexp_sim"])
def test_mean_mass_matches_laplace_derivative(name, request):
    sim = request.getfixturevalue(name)
    solver = sim.solver
    h = 1e-4
    laplace = [solver.cbi_laplace(1.0, 1.0, k * h) for k in range(3)]
    mean = (3 * laplace[0] - 4 * laplace[1] + laplace[2]) / (2 * h)
    z, lam = simulate_samples(sim, 1.0, 1.0, 50_000, seed=10)
    assert abs(z_of(lam, mean)) < 4
    assert abs(z_of(z.astype(float), sim.lam_star * mean)) < 4


def test_thinning_count_matches_intensity(quad_sim):
    # intensity 2 v*_s = 2 / (e^s - 1) integrates to 2 log((1 - e^{-hi}) / (1 - e^{-lo}))
    rng = np.random.default_rng(12)
    lo, hi = 0.01, 1.5
    n = 20_000
    seg, gap = quad_sim.thin(np.full(n, lo), np.full(n, hi), lambda v: 2 * v, math.inf, rng)
    assert np.all((gap >= lo) & (gap <= hi))
    counts = np.bincount(seg, minlength=n).astype(float)
    target = 2 * math.log(-math.expm1(-hi) / -math.expm1(-lo))
    assert abs(z_of(counts, target)) < 4
    # the gap density is proportional to v*_s: compare the mean gap
    num = integrate.quad(lambda s: s / math.expm1(s), lo, hi)[0]
    den = integrate.quad(lambda s: 1 / math.expm1(s), lo, hi)[0]
    assert abs(z_of(gap, num / den)) < 4


def test_thinning_of_empty_segments(quad_sim):
    rng = np.random.default_rng(0)
    seg, gap = quad_sim.thin(np.array([0.5]), np.array([0.5]), lambda v: v, math.inf, rng)
    assert seg.size == 0 and gap.size == 0


@pytest.mark.parametrize("name", ["quad_sim", "atoms_sim", "cexp_sim"])
def test_spine_dressing_campbell(name, request):
    sim = request.getfixturevalue(name)
    for th in (0.5, 2.0):
        row = campbell_spine_check(sim, 1.0, th, 50_000, seed=13)
        assert abs(row.z) < 4


@pytest.mark.parametrize("name", ["atoms_sim", "cexp_sim"])
def test_joint_laplace_jump_families(name, request):
    sim = request.getfixturevalue(name)
    report = mc_joint_laplace(sim, 1.0, 1.0, [0.0, 0.5, 1.0], [0.0, 0.5, 2.0], 30_000, seed=14)
    assert report.passed, report.summary()


def test_population_guard():
    sim = BackboneSimulator(SemigroupSolver(QUAD, ImmigrationMechanism(0.0)), 5.0, population_guard=1000)
    with pytest.raises(PopulationBlowupError):
        sim.simulate_batch(5.0, 5.0, 200, np.random.default_rng(0))


def test_domain_errors(quad_sim):
    rng = np.random.default_rng(0)
    with pytest.raises(DomainError):
        quad_sim.sample_batch(1.0, 3.0, 10, rng)
    with pytest.raises(DomainError):
        quad_sim.sample_batch(-1.0, 1.0, 10, rng)
    with pytest.raises(DomainError):
        simulate_samples(quad_sim, 1.0, 1.0, 0, seed=1)


def test_drift_immigration_needs_diffusion():
    mech = BranchingMechanism(-0.3, 0.0, CompoundExponential(3.0, 1.0))
    with pytest.raises(NStarUndefinedError):
        BackboneSimulator(SemigroupSolver(mech, ImmigrationMechanism(0.5, ZeroMeasure())), 1.0)


def test_output_independent_of_threads(atoms_sim):
    a = simulate_samples(atoms_sim, 1.0, 1.0, 5000, seed=15, threads=1)
    b = simulate_samples(atoms_sim, 1.0, 1.0, 5000, seed=15, threads=3)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    c = simulate_samples(atoms_sim, 1.0, 1.0, 5000, seed=16)
    assert not np.array_equal(a[1], c[1])


def test_dressing_records(atoms_sim):
    rng = np.random.default_rng(17)
    forest = atoms_sim.simulate_forest(1.0, 1.0, rng)
    z, lam = atoms_sim.dress_and_mass(forest, rng)
    assert z == forest.alive_count()
    assert math.fsum(d.mass for d in forest.dressing) == pytest.approx(lam, rel=1e-12, abs=1e-300)
    assert forest.dressing[0].location == "initial"
    for d in forest.dressing:
        assert d.mass >= 0
        assert d.source in ("graft", "excursion", "excursion-window") or d.source.startswith("tilted-jump:")
        assert d.location.split(":")[0] in ("initial", "branch", "immigration", "lifeline", "spine")
    kinds = {r["record"] for r in forest.to_records()}
    assert {"forest", "individual", "dressing"} <= kinds
