"""Command line front end.

    cbi-backbone validate --config scenario.json
    cbi-backbone analytic --config scenario.json --out results/
    cbi-backbone simulate --config scenario.json --out results/ --seed 7 --threads 4
    cbi-backbone verify --config scenario.json --out results/ --replicates 100000
    cbi-backbone export-forest --config scenario.json --out results/

Exit status is 0 on success, 1 when ``verify`` rejects and 2 on configuration
or numerical errors, which are reported on stderr as ``error: CODE: message``.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .backbone import BackboneSimulator, simulate_samples
from .config import ScenarioConfig, load_config
from .errors import BackboneError
from .verify import Thresholds, joint_report_from_samples, McReport, poissonization_report

EXIT_OK, EXIT_STAT_FAIL, EXIT_ERROR = 0, 1, 2


def _header(cfg: ScenarioConfig, command: str) -> list[str]:
    return [f"cbi-backbone {command}", f"digest {cfg.digest}", f"seed {cfg.seed}"]


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    return path


def _simulator(cfg: ScenarioConfig) -> BackboneSimulator:
    kwargs = {}
    if cfg.backend == "generic-inversion":
        kwargs["eps_inv"] = cfg.eps_inv
    return BackboneSimulator(
        cfg.solver(),
        cfg.horizon,
        backend=cfg.backend,
        window=cfg.horizon_window,
        population_guard=cfg.population_guard,
        **kwargs,
    )


def cmd_validate(cfg: ScenarioConfig, args) -> int:
    solver = cfg.solver()
    diag = solver.diagnostics
    lines = [f"lambda*={diag.lam_star:.12g}", f"q={diag.q:.12g}", f"p={diag.p:.12g}"]
    lines += [f"psi'(0+)={diag.psi_prime_zero:.12g}"] + [f"flag: {f}" for f in diag.flags]
    table = ["r,F,G"] + [f"{r:.1f},{solver.F_of(r)!r},{solver.G_of(r)!r}" for r in np.linspace(0, 1, 11)]
    print("\n".join(lines))
    if args.out:
        body = "\n".join(f"# {h}" for h in _header(cfg, "validate") + lines) + "\n" + "\n".join(table) + "\n"
        _write(Path(args.out), "generators.csv", body)
    else:
        print("\n".join(table))
    return EXIT_OK


def cmd_analytic(cfg: ScenarioConfig, args) -> int:
    solver = cfg.solver()
    rows = ["t,theta,r,u,u_star,v_star,w,cbi_laplace,joint_target"]
    for t in cfg.horizon * np.arange(1, 11) / 10:
        v = solver.survival_v_star(t) if cfg.mechanism.beta > 0 else math.inf
        for th in cfg.theta_grid:
            for r in cfg.r_grid:
                arg = th + solver.lam_star * (1 - r)
                vals = (
                    solver.solve_u(t, arg),
                    solver.solve_u_star(t, th),
                    v,
                    solver.w_of(t, r, th),
                    solver.cbi_laplace(cfg.x, t, th),
                    solver.joint_backbone_laplace(cfg.x, t, r, th),
                )
                rows.append(",".join([repr(float(t)), repr(th), repr(r)] + [repr(float(a)) for a in vals]))
    text = "\n".join(f"# {h}" for h in _header(cfg, "analytic")) + "\n" + "\n".join(rows) + "\n"
    path = _write(Path(args.out), "analytic.csv", text)
    print(f"wrote {path}")
    return EXIT_OK


def _samples(cfg: ScenarioConfig, args):
    sim = _simulator(cfg)
    z, lam = simulate_samples(sim, cfg.x, cfg.horizon, cfg.replicates, cfg.seed, args.threads)
    return sim, z, lam


def cmd_simulate(cfg: ScenarioConfig, args) -> int:
    _sim, z, lam = _samples(cfg, args)
    head = _header(cfg, "simulate") + [f"replicates {cfg.replicates}", f"x {cfg.x!r}", f"t {cfg.horizon!r}"]
    lines = [f"# {h}" for h in head] + ["replicate,Z,Lambda"]
    lines += [f"{i},{int(a)},{float(b)!r}" for i, (a, b) in enumerate(zip(z, lam))]
    path = _write(Path(args.out), "samples.csv", "\n".join(lines) + "\n")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_verify(cfg: ScenarioConfig, args) -> int:
    sim, z, lam = _samples(cfg, args)
    thresholds = Thresholds(max_abs_z=cfg.max_abs_z, max_flag_fraction=cfg.max_flag_fraction)
    rows = joint_report_from_samples(z, lam, sim.solver, cfg.x, cfg.horizon, cfg.r_grid, cfg.theta_grid)
    joint = McReport(rows, cfg.digest, cfg.seed, thresholds=thresholds)
    pois = poissonization_report(z, lam, sim.lam_star, cfg.r_grid, cfg.theta_grid, cfg.digest, cfg.seed)
    pois.thresholds = thresholds
    out = Path(args.out)
    _write(out, "joint_laplace.csv", joint.to_csv(_header(cfg, "verify joint-laplace")))
    _write(out, "poissonization.csv", pois.to_csv(_header(cfg, "verify poissonization")))
    passed = joint.passed and pois.passed
    summary = [joint.summary(), pois.summary(), f"verdict: {'PASS' if passed else 'FAIL'}"]
    _write(out, "summary.txt", "\n".join(f"# {h}" for h in _header(cfg, "verify")) + "\n" + "\n".join(summary) + "\n")
    print("\n".join(summary))
    return EXIT_OK if passed else EXIT_STAT_FAIL


def cmd_export_forest(cfg: ScenarioConfig, args) -> int:
    sim = _simulator(cfg)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    forest = sim.simulate_forest(cfg.x, cfg.horizon, rng)
    forest.check_invariants()
    z, lam = sim.dress_and_mass(forest, rng)
    head = _header(cfg, "export-forest") + [f"Z {z}", f"Lambda {lam!r}"]
    lines = [f"# {h}" for h in head] + [json.dumps(rec, allow_nan=True) for rec in forest.to_records()]
    path = _write(Path(args.out), "forest.jsonl", "\n".join(lines) + "\n")
    print(f"wrote {path}")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "analytic": cmd_analytic,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "export-forest": cmd_export_forest,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cbi-backbone", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="scenario JSON file")
        p.add_argument("--out", default=None if name == "validate" else "cbi-out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
        p.add_argument("--replicates", type=int, default=None, help="number of replicates (overrides the config)")
        p.add_argument("--threads", type=int, default=1, help="worker threads; outputs do not depend on it")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config).with_overrides(seed=args.seed, replicates=args.replicates)
        return COMMANDS[args.command](cfg, args)
    except BackboneError as exc:
        message = str(exc).replace("\n", " ")
        print(f"error: {exc.code}: {message}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
