"""
Excursion samplers for jump mechanisms
======================================

The dressing needs draws of the excursion mass at gap s under N*, conditioned
to be positive. With a finite tilted jump measure the exact sampler splits an
excursion at its first jump. The generic sampler instead tabulates the law by
Fourier inversion. Here both are compared with the analytic Laplace transform
1 - u*_s(theta) / v*_s.
"""

import math
import time

import numpy as np

from cbi_backbone import BranchingMechanism, ImmigrationMechanism, SemigroupSolver
from cbi_backbone.kernels import InversionKernel, JumpExactKernel
from cbi_backbone.mechanisms import FiniteAtoms

mech = BranchingMechanism(alpha=0.5, beta=0.5, pi=FiniteAtoms(((2.0, 1.0), (0.5, 2.0))))
solver = SemigroupSolver(mech, ImmigrationMechanism(0.0))
print(f"lambda* = {solver.lam_star:.6f}, q = {solver.q:.6f}")

start = time.perf_counter()
exact = JumpExactKernel(solver, horizon=1.0)
print(f"jump-exact kernel ready in {time.perf_counter() - start:.2f}s: "
      f"tilted jump mass k = {exact.k:.4f}, U+ = {exact.u_plus:.4f}")
start = time.perf_counter()
generic = InversionKernel(solver, horizon=1.0)
print(f"generic inversion tables built in {time.perf_counter() - start:.2f}s")

# %%
# The mean excursion mass at gap s is e^{-q s} / v*_s. The exact sampler matches it
# at every gap. The tables lose about a percent at small gaps for this family.
rng = np.random.default_rng(1)
n = 200_000
print(f"{'s':>6} {'target':>10} {'exact':>10} {'generic':>10}")
for s in (1.0, 0.3, 0.05):
    target = math.exp(-solver.q * s) / solver.survival_v_star(s)
    a = exact.sample_nstar_mass(np.full(n, s), rng).mean()
    b = generic.sample_nstar_mass(np.full(n, s), rng).mean()
    print(f"{s:6.2f} {target:10.5f} {a:10.5f} {b:10.5f}")

# %%
# Laplace transforms of the full transition from y = 1 over s = 1.
draws = exact.sample_cbstar_transition(np.ones(n), 1.0, rng)
for th in (0.5, 1.0, 2.0):
    print(f"theta={th}: empirical {np.exp(-th * draws).mean():.5f}  analytic {exact.transition_laplace(1.0, 1.0, th):.5f}")
