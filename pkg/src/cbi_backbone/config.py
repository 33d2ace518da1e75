"""Scenario configuration: a single JSON document with explicit defaults.

``ScenarioConfig.from_dict`` validates and fills defaults; ``to_dict`` emits
the normalised form, and ``digest`` is the SHA-256 of its canonical JSON
encoding, which every artifact carries in its header.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .mechanisms import BranchingMechanism, ImmigrationMechanism, jump_measure_from_dict
from .semigroup import SemigroupSolver

BACKENDS = ("auto", "quadratic-exact", "jump-exact", "generic-inversion")


@dataclass(frozen=True)
class ScenarioConfig:
    mechanism: BranchingMechanism
    immigration: ImmigrationMechanism
    x: float = 1.0
    horizon: float = 1.0
    r_grid: tuple[float, ...] = (0.0, 0.5, 1.0)
    theta_grid: tuple[float, ...] = (0.0, 0.5, 1.0, 2.0)
    replicates: int = 100_000
    seed: int = 20240601
    ode_rel_tol: float = 1e-10
    ode_abs_tol: float = 1e-12
    eps_inv: float = 1e-4
    backend: str = "auto"
    population_guard: int = 10**7
    horizon_window: float = 1e-3
    max_abs_z: float = 4.0
    max_flag_fraction: float = 0.10

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        try:
            m = d["mechanism"]
            mech = BranchingMechanism(float(m["alpha"]), float(m["beta"]), jump_measure_from_dict(m.get("jumps", {})))
            im = d.get("immigration", {})
            imm = ImmigrationMechanism(float(im.get("delta", 0.0)), jump_measure_from_dict(im.get("jumps", {})))
            sim = d.get("simulation", {})
            tol = d.get("tolerances", {})
            ver = d.get("verify", {})
            cfg = cls(
                mechanism=mech,
                immigration=imm,
                x=float(d.get("x", 1.0)),
                horizon=float(d.get("horizon", 1.0)),
                r_grid=tuple(float(r) for r in ver.get("r_grid", cls.r_grid)),
                theta_grid=tuple(float(th) for th in ver.get("theta_grid", cls.theta_grid)),
                replicates=int(sim.get("replicates", cls.replicates)),
                seed=int(sim.get("seed", cls.seed)),
                ode_rel_tol=float(tol.get("ode_rel_tol", cls.ode_rel_tol)),
                ode_abs_tol=float(tol.get("ode_abs_tol", cls.ode_abs_tol)),
                eps_inv=float(tol.get("eps_inv", cls.eps_inv)),
                backend=str(sim.get("backend", cls.backend)),
                population_guard=int(sim.get("population_guard", cls.population_guard)),
                horizon_window=float(sim.get("horizon_window", cls.horizon_window)),
                max_abs_z=float(ver.get("max_abs_z", cls.max_abs_z)),
                max_flag_fraction=float(ver.get("max_flag_fraction", cls.max_flag_fraction)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError) or hasattr(exc, "code"):
                raise
            raise ConfigError(f"malformed configuration: missing or invalid {exc}") from exc
        cfg.check()
        return cfg

    def check(self) -> None:
        if not (self.x >= 0 and math.isfinite(self.x)):
            raise ConfigError("x must be a finite number >= 0")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ConfigError("horizon must be > 0")
        if not self.r_grid or not self.theta_grid:
            raise ConfigError("r_grid and theta_grid must be nonempty")
        if any(not 0 <= r <= 1 for r in self.r_grid):
            raise ConfigError("r_grid values must lie in [0, 1]")
        if any(not th >= 0 for th in self.theta_grid):
            raise ConfigError("theta_grid values must be >= 0")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {', '.join(BACKENDS)}")
        for name in ("ode_rel_tol", "ode_abs_tol", "eps_inv", "horizon_window"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.population_guard < 1:
            raise ConfigError("population_guard must be >= 1")

    def to_dict(self) -> dict:
        return {
            "mechanism": self.mechanism.to_dict(),
            "immigration": self.immigration.to_dict(),
            "x": self.x,
            "horizon": self.horizon,
            "simulation": {
                "replicates": self.replicates,
                "seed": self.seed,
                "backend": self.backend,
                "population_guard": self.population_guard,
                "horizon_window": self.horizon_window,
            },
            "tolerances": {"ode_rel_tol": self.ode_rel_tol, "ode_abs_tol": self.ode_abs_tol, "eps_inv": self.eps_inv},
            "verify": {
                "r_grid": list(self.r_grid),
                "theta_grid": list(self.theta_grid),
                "max_abs_z": self.max_abs_z,
                "max_flag_fraction": self.max_flag_fraction,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @property
    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    def with_overrides(self, seed: int | None = None, replicates: int | None = None) -> "ScenarioConfig":
        d = self.to_dict()
        if seed is not None:
            d["simulation"]["seed"] = seed
        if replicates is not None:
            d["simulation"]["replicates"] = replicates
        return ScenarioConfig.from_dict(d)

    def solver(self) -> SemigroupSolver:
        return SemigroupSolver(self.mechanism, self.immigration, self.ode_rel_tol, self.ode_abs_tol)


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc.msg} (line {exc.lineno})") from exc
    return ScenarioConfig.from_dict(data)
