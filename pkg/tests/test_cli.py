import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from cbi_backbone.cli import main
from cbi_backbone.config import ScenarioConfig, load_config
from cbi_backbone.errors import ValidationError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
QUAD_CFG = CONFIGS / "quadratic_drift.json"
JUMP_CFG = CONFIGS / "jump_families.json"


def write_cfg(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def quad_dict(**extra):
    d = json.loads(QUAD_CFG.read_text())
    d.update(extra)
    return d


@pytest.mark.parametrize("path", [QUAD_CFG, JUMP_CFG])
def test_config_round_trip(path):
    cfg = load_config(path)
    again = ScenarioConfig.from_dict(json.loads(cfg.to_json()))
    assert again == cfg
    assert again.to_json() == cfg.to_json()
    assert again.digest == cfg.digest and len(cfg.digest) == 64


def test_config_defaults_and_overrides():
    cfg = ScenarioConfig.from_dict({"mechanism": {"alpha": -1.0, "beta": 1.0}})
    assert cfg.replicates == 100_000 and cfg.backend == "auto" and cfg.immigration.delta == 0.0
    other = cfg.with_overrides(seed=5, replicates=10)
    assert other.seed == 5 and other.replicates == 10 and other.digest != cfg.digest


@pytest.mark.parametrize(
    "bad",
    [
        {},
        {"mechanism": {"alpha": -1.0}},
        {"mechanism": {"alpha": -1.0, "beta": 1.0}, "verify": {"r_grid": [1.5]}},
        {"mechanism": {"alpha": -1.0, "beta": 1.0}, "verify": {"theta_grid": []}},
        {"mechanism": {"alpha": -1.0, "beta": 1.0}, "simulation": {"backend": "magic"}},
        {"mechanism": {"alpha": -1.0, "beta": 1.0}, "horizon": -1},
        {"mechanism": {"alpha": -1.0, "beta": 1.0, "jumps": {"family": "stable"}}},
    ],
)
def test_bad_configs_are_rejected(bad):
    # ConfigError for the document itself, InvalidParameterError for mechanism values
    with pytest.raises(ValidationError):
        ScenarioConfig.from_dict(bad)


def test_validate(capsys):
    assert main(["validate", "--config", str(QUAD_CFG)]) == 0
    out = capsys.readouterr().out
    assert "lambda*=1" in out and "q=1" in out and "r,F,G" in out


def test_analytic_matches_closed_form(tmp_path):
    assert main(["analytic", "--config", str(QUAD_CFG), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "analytic.csv").read_text().splitlines()
    assert lines[0] == "# cbi-backbone analytic" and lines[1].startswith("# digest ")
    header = lines[3].split(",")
    rows = [dict(zip(header, map(float, ln.split(",")))) for ln in lines[4:]]
    assert len(rows) == 10 * 4 * 3
    for row in rows:
        t, th = row["t"], row["theta"]
        assert row["u_star"] == pytest.approx(th * math.exp(-t) / (1 + th * -math.expm1(-t)), abs=1e-9)
        assert row["v_star"] == pytest.approx(1 / math.expm1(t), rel=1e-8)


def test_simulate_is_byte_identical(tmp_path):
    outs = []
    for k, threads in enumerate((1, 1, 4)):
        out = tmp_path / f"run{k}"
        argv = ["simulate", "--config", str(QUAD_CFG), "--out", str(out), "--replicates", "5000"]
        assert main(argv + ["--threads", str(threads)]) == 0
        outs.append((out / "samples.csv").read_bytes())
    assert outs[0] == outs[1] == outs[2]
    lines = outs[0].decode().splitlines()
    assert "# seed 20240601" in lines and lines[6] == "replicate,Z,Lambda"
    assert len(lines) == 7 + 5000


def test_simulate_seed_override_changes_output(tmp_path):
    base = ["simulate", "--config", str(QUAD_CFG), "--replicates", "500"]
    assert main(base + ["--out", str(tmp_path / "a")]) == 0
    assert main(base + ["--out", str(tmp_path / "b"), "--seed", "7"]) == 0
    a = (tmp_path / "a" / "samples.csv").read_text()
    b = (tmp_path / "b" / "samples.csv").read_text()
    assert "# seed 7" in b and a != b


def test_verify_passes_and_writes_reports(tmp_path, capsys):
    code = main(["verify", "--config", str(QUAD_CFG), "--out", str(tmp_path), "--replicates", "20000"])
    assert code == 0
    assert "verdict: PASS" in (tmp_path / "summary.txt").read_text()
    joint = (tmp_path / "joint_laplace.csv").read_text().splitlines()
    assert joint[-13] == "r,theta,target,estimate,stderr,z,n"
    pois = (tmp_path / "poissonization.csv").read_text().splitlines()
    assert len(pois) == len(joint)


def test_verify_exit_code_on_rejection(tmp_path):
    # an absurdly tight z threshold must reject
    cfg = write_cfg(tmp_path, quad_dict(verify={"max_abs_z": 1e-6}))
    assert main(["verify", "--config", cfg, "--out", str(tmp_path / "o"), "--replicates", "2000"]) == 1


def test_export_forest(tmp_path):
    assert main(["export-forest", "--config", str(JUMP_CFG), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "forest.jsonl").read_text().splitlines()
    head = [ln for ln in lines if ln.startswith("#")]
    recs = [json.loads(ln) for ln in lines if not ln.startswith("#")]
    assert recs[0]["record"] == "forest" and recs[0]["horizon"] == 1.0
    z = int(next(h for h in head if h.startswith("# Z ")).split()[2])
    assert z == sum(1 for r in recs if r["record"] == "individual" and r["death"] is None)
    lam = float(next(h for h in head if h.startswith("# Lambda ")).split()[2])
    assert math.fsum(r["mass"] for r in recs if r["record"] == "dressing") == pytest.approx(lam, rel=1e-12)


@pytest.mark.parametrize(
    "content",
    ["{not json", json.dumps({"mechanism": {"alpha": 1.0, "beta": 1.0}}), json.dumps({"mechanism": {}})],
)
def test_errors_exit_2(tmp_path, capsys, content):
    path = tmp_path / "bad.json"
    path.write_text(content)
    assert main(["validate", "--config", str(path)]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error: ")


def test_missing_config_exit_2(capsys):
    assert main(["analytic", "--config", "/nonexistent/x.json"]) == 2
    assert "error: config:" in capsys.readouterr().err


def test_module_entry_point():
    res = subprocess.run(
        [sys.executable, "-m", "cbi_backbone.cli", "validate", "--config", str(QUAD_CFG)],
        capture_output=True,
        text=True,
    )
    assert res.returncode == 0 and "lambda*=" in res.stdout
