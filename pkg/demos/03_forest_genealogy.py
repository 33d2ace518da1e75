"""
One dressed backbone forest
===========================

A single replicate, printed as the genealogy of backbone individuals together
with the masses grafted along it.
"""

from collections import Counter

import numpy as np

from cbi_backbone import BackboneSimulator, BranchingMechanism, ImmigrationMechanism, SemigroupSolver
from cbi_backbone.mechanisms import CompoundExponential, FiniteAtoms

mech = BranchingMechanism(alpha=-0.2, beta=0.5, pi=CompoundExponential(2.0, 1.5))
imm = ImmigrationMechanism(delta=0.3, nu=FiniteAtoms(((1.0, 1.0),)))
sim = BackboneSimulator(SemigroupSolver(mech, imm), horizon=1.0)

rng = np.random.default_rng(7)
forest = sim.simulate_forest(1.0, 1.0, rng)
forest.check_invariants()
z, lam = sim.dress_and_mass(forest, rng)

print(f"{len(forest.individuals)} individuals, {z} alive at t = 1, Lambda_1 = {lam:.4f}")
for ind in forest.individuals:
    end = "alive" if ind.death is None else f"{ind.death:.3f}"
    origin = ind.root if ind.parent is None else f"child of {ind.parent}"
    print(f"  #{ind.id:<3} {origin:<16} born {ind.birth:.3f}  dies {end}")
for ev in forest.branch_events:
    print(f"  branch at {ev.time:.3f}: {ev.offspring} offspring, graft mass {ev.graft_mass:.3f}")
for k, ev in enumerate(forest.immigration_events):
    print(f"  immigration {k} at {ev.time:.3f}: {ev.immigrants} immigrants, graft mass {ev.graft_mass:.3f}")

# %%
# Where the mass at the horizon comes from.
by_kind = Counter()
for rec in forest.dressing:
    by_kind[rec.location.split(":")[0]] += rec.mass
for kind, mass in sorted(by_kind.items()):
    print(f"  {kind:<12} {mass:.4f}")
