"""Monte Carlo certification of the backbone decomposition.

Four checks are provided:

* ``mc_joint_laplace`` compares E[r^Z e^{-theta Lambda}] on an (r, theta) grid
  with the analytic joint Laplace functional;
* ``poissonization_check`` tests that Z given Lambda is Poisson(lam* Lambda) by
  a paired difference on the same samples;
* ``campbell_spine_check`` isolates the immigration time-line dressing;
* ``ks_two_sample`` compares Lambda with draws from an independent exact
  sampler of the quadratic CBI (``direct_cbi_sample``).

A grid of z-scores passes when max |z| < 4 and at most 10% exceed 2 in
absolute value. All means are reduced with ``math.fsum`` so they do not
depend on the order in which worker threads deliver their chunks.
"""

from __future__ import annotations

import io
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .backbone import BackboneSimulator, simulate_samples
from .errors import CapabilityError, ConfigError
from .mechanisms import BranchingMechanism, ImmigrationMechanism
from .semigroup import SemigroupSolver

__all__ = [
    "McRow",
    "McReport",
    "PairedReport",
    "KsResult",
    "Thresholds",
    "mean_and_se",
    "z_score",
    "grid_verdict",
    "mc_joint_laplace",
    "joint_report_from_samples",
    "poissonization_check",
    "poissonization_report",
    "campbell_spine_check",
    "direct_cbi_sample",
    "ks_two_sample",
]

CSV_COLUMNS = ("r", "theta", "target", "estimate", "stderr", "z", "n")


@dataclass(frozen=True)
class Thresholds:
    max_abs_z: float = 4.0
    z_flag: float = 2.0
    max_flag_fraction: float = 0.10
    ks_alpha: float = 0.01


def mean_and_se(values: np.ndarray) -> tuple[float, float]:
    """Compensated mean and standard error of the mean."""
    values = np.asarray(values, dtype=float)
    n = values.size
    if n == 0:
        raise ConfigError("no samples")
    mean = math.fsum(values) / n
    if n == 1:
        return mean, math.nan
    var = math.fsum((values - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


def z_score(estimate: float, target: float, se: float) -> float:
    """(estimate - target)/se; a constant functional (se = 0) that hits its target scores 0."""
    if se > 0:
        return (estimate - target) / se
    return 0.0 if abs(estimate - target) <= 1e-12 * max(1.0, abs(target)) else math.copysign(math.inf, estimate - target)


def grid_verdict(zs, thresholds: Thresholds = Thresholds()) -> bool:
    z = np.abs(np.asarray(list(zs), dtype=float))
    if z.size == 0:
        return True
    if not np.all(np.isfinite(z)) or z.max() >= thresholds.max_abs_z:
        return False
    return float(np.mean(z > thresholds.z_flag)) <= thresholds.max_flag_fraction


@dataclass(frozen=True)
class McRow:
    r: float
    theta: float
    target: float
    estimate: float
    stderr: float
    z: float
    n: int


@dataclass
class McReport:
    rows: list[McRow]
    digest: str = ""
    seed: int = 0
    wall_time: float = 0.0
    label: str = "joint-laplace"
    thresholds: Thresholds = field(default_factory=Thresholds)

    @property
    def z_scores(self) -> list[float]:
        return [row.z for row in self.rows]

    @property
    def max_abs_z(self) -> float:
        return max((abs(z) for z in self.z_scores), default=0.0)

    @property
    def passed(self) -> bool:
        return grid_verdict(self.z_scores, self.thresholds)

    def to_csv(self, header: list[str] | None = None) -> str:
        buf = io.StringIO()
        for line in header or ():
            buf.write(f"# {line}\n")
        buf.write(",".join(CSV_COLUMNS) + "\n")
        for row in self.rows:
            buf.write(",".join(_fmt(getattr(row, c)) for c in CSV_COLUMNS) + "\n")
        return buf.getvalue()

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        flagged = sum(abs(z) > self.thresholds.z_flag for z in self.z_scores)
        return (
            f"{self.label}: {verdict} max|z|={self.max_abs_z:.3f} "
            f"flagged={flagged}/{len(self.rows)} n={self.rows[0].n if self.rows else 0}"
        )


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


# ---------------------------------------------------------------------------
# Laplace grid
# ---------------------------------------------------------------------------


def _check_grid(r_grid, theta_grid):
    if len(r_grid) == 0 or len(theta_grid) == 0:
        raise ConfigError("r-grid and theta-grid must be nonempty")
    if any(not 0 <= r <= 1 for r in r_grid) or any(th < 0 for th in theta_grid):
        raise ConfigError("grid needs r in [0, 1] and theta >= 0")


def joint_report_from_samples(z, lam, solver: SemigroupSolver, x: float, t: float, r_grid, theta_grid, target=None):
    """Rows of E[r^Z e^{-theta Lambda}] against ``target(r, theta)``.

    The default target is the joint backbone Laplace functional; the reduction
    cases pass their own.
    """
    _check_grid(r_grid, theta_grid)
    if target is None:
        target = lambda r, th: solver.joint_backbone_laplace(x, t, r, th)  # noqa: E731
    z = np.asarray(z)
    lam = np.asarray(lam, dtype=float)
    rows = []
    for r in r_grid:
        for th in theta_grid:
            vals = np.power(float(r), z) * np.exp(-th * lam)
            est, se = mean_and_se(vals)
            tgt = target(r, th)
            rows.append(McRow(float(r), float(th), tgt, est, se, z_score(est, tgt, se), int(z.size)))
    return rows


def mc_joint_laplace(
    sim: BackboneSimulator,
    x: float,
    t: float,
    r_grid,
    theta_grid,
    n: int,
    seed: int,
    threads: int = 1,
    digest: str = "",
) -> McReport:
    """Estimate the joint Laplace functional on a grid from ``n`` simulated replicates."""
    _check_grid(r_grid, theta_grid)
    if n < 100:
        raise ConfigError("need at least 100 replicates")
    start = time.perf_counter()
    z, lam = simulate_samples(sim, x, t, n, seed, threads)
    rows = joint_report_from_samples(z, lam, sim.solver, x, t, r_grid, theta_grid)
    return McReport(rows, digest, seed, time.perf_counter() - start)


# ---------------------------------------------------------------------------
# Poissonization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PairedReport:
    r: float
    theta: float
    mean: float
    stderr: float
    z: float
    n: int
    unpaired_stderr: float  # SE of the difference of two independent means, for comparison
    identically_zero: bool


def poissonization_check(z, lam, lam_star: float, r: float, theta: float) -> PairedReport:
    """Paired test of E[r^Z e^{-theta Lambda}] = E[e^{-(theta + lam*(1-r)) Lambda}]."""
    z = np.asarray(z)
    lam = np.asarray(lam, dtype=float)
    if z.size < 100:
        raise ConfigError("poissonization check needs at least 100 samples")
    a = np.power(float(r), z) * np.exp(-theta * lam)
    b = np.exp(-(theta + lam_star * (1.0 - r)) * lam)
    d = a - b
    mean, se = mean_and_se(d)
    unpaired = math.hypot(mean_and_se(a)[1], mean_and_se(b)[1])
    return PairedReport(r, theta, mean, se, z_score(mean, 0.0, se), int(z.size), unpaired, bool(np.all(d == 0)))


def poissonization_report(z, lam, lam_star: float, r_grid, theta_grid, digest: str = "", seed: int = 0) -> McReport:
    _check_grid(r_grid, theta_grid)
    rows = []
    for r in r_grid:
        for th in theta_grid:
            pr = poissonization_check(z, lam, lam_star, r, th)
            rows.append(McRow(float(r), float(th), 0.0, pr.mean, pr.stderr, pr.z, pr.n))
    return McReport(rows, digest, seed, label="poissonization")


# ---------------------------------------------------------------------------
# spine dressing alone
# ---------------------------------------------------------------------------


def campbell_spine_check(sim: BackboneSimulator, t: float, theta: float, n: int, seed: int) -> McRow:
    """MC of the spine-only dressing against exp(-int_0^t phi*(u*_s(theta)) ds)."""
    rng = np.random.default_rng(seed)
    lam = sim.sample_spine_only(t, n, rng)
    est, se = mean_and_se(np.exp(-theta * lam))
    target = math.exp(-sim.solver.spine_integral(t, theta))
    return McRow(math.nan, theta, target, est, se, z_score(est, target, se), n)


# ---------------------------------------------------------------------------
# direct sampler and two-sample test
# ---------------------------------------------------------------------------


def direct_cbi_sample(mech: BranchingMechanism, imm: ImmigrationMechanism, x: float, t: float, rng, size=None):
    """Exact draw(s) of X_t for psi = alpha lam + beta lam^2 and phi = delta lam.

    With k = -alpha and c = (beta/k)(e^{kt} - 1) the semigroup is
    u_t(lam) = lam e^{kt}/(1 + lam c) and the immigration integral is
    (delta/beta) log(1 + lam c), so X_t is Gamma(delta/beta + M, scale c)
    with M ~ Poisson(x e^{kt}/c).
    """
    if not mech.pi.is_zero() or not imm.nu.is_zero() or mech.beta <= 0 or mech.alpha >= 0:
        raise CapabilityError("direct sampler needs alpha < 0, beta > 0, no jumps and drift-only immigration")
    if x < 0 or t < 0:
        raise ConfigError("x and t must be >= 0")
    if t == 0:
        return float(x) if size is None else np.full(size, float(x))
    k = -mech.alpha
    c = (mech.beta / k) * math.expm1(k * t)
    m = rng.poisson(x * math.exp(k * t) / c, size=size)
    # numpy returns 0 for a Gamma with shape 0, which is the atom at zero
    out = rng.gamma(imm.delta / mech.beta + m, c)
    return float(out) if size is None else np.asarray(out, dtype=float)


@dataclass(frozen=True)
class KsResult:
    statistic: float  # KS distance between the positive parts
    p_value: float  # Bonferroni combination of the two p-values below
    p_ks: float
    p_atom: float
    atom_a: float
    atom_b: float


def _two_proportion_p(k1: int, n1: int, k2: int, n2: int) -> float:
    pooled = (k1 + k2) / (n1 + n2)
    var = pooled * (1 - pooled) * (1 / n1 + 1 / n2)
    if var == 0:
        return 1.0
    z = (k1 / n1 - k2 / n2) / math.sqrt(var)
    return float(2 * stats.norm.sf(abs(z)))


def ks_two_sample(a, b) -> KsResult:
    """Two-sample comparison of laws with a possible atom at zero.

    The atoms are compared by a two-proportion z-test and the positive parts
    by the asymptotic two-sample Kolmogorov-Smirnov test; the reported
    p-value is twice the smaller of the two, capped at 1.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ConfigError("two-sample test needs nonempty samples")
    pa, pb = a[a > 0], b[b > 0]
    p_atom = _two_proportion_p(a.size - pa.size, a.size, b.size - pb.size, b.size)
    if pa.size and pb.size:
        res = stats.ks_2samp(pa, pb, method="asymp")
        stat, p_ks = float(res.statistic), float(res.pvalue)
    else:
        stat, p_ks = (0.0, 1.0) if pa.size == pb.size else (1.0, 0.0)
    p = min(1.0, 2 * min(p_ks, p_atom))
    return KsResult(stat, p, p_ks, p_atom, 1 - pa.size / a.size, 1 - pb.size / b.size)
