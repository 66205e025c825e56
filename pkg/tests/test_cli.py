"""CLI: config validation, subcommands, exit codes, determinism, compare."""

import json
import os
import shutil
import subprocess
import sys

import pytest

from subunit_lab.cli import main
from subunit_lab.config import ExperimentConfig
from subunit_lab.errors import ConfigError, SchemaMismatchError
from subunit_lab.reporting import compare, load_report, validate_report

SMOKE = os.path.join(os.path.dirname(__file__), "..", "src", "subunit_lab",
                     "configs", "euclidean-smoke.json")


@pytest.fixture(scope="module")
def smoke_cfg_path():
    return os.path.abspath(SMOKE)


@pytest.fixture(scope="module")
def smoke_run(tmp_path_factory, smoke_cfg_path):
    out = tmp_path_factory.mktemp("smoke")
    code = main(["run", "--config", smoke_cfg_path, "--out", str(out)])
    assert code == 0
    return out


def test_config_roundtrip(tmp_path, smoke_cfg_path):
    cfg = ExperimentConfig.load(smoke_cfg_path)
    p = tmp_path / "echo.json"
    cfg.dump(p)
    cfg2 = ExperimentConfig.load(p)
    assert cfg.to_dict() == cfg2.to_dict()


def test_malformed_config_exit_1_with_field_path(tmp_path, smoke_cfg_path,
                                                 capsys):
    raw = json.load(open(smoke_cfg_path))
    raw["params"]["nu"] = 1.5
    bad = tmp_path / "bad.json"
    json.dump(raw, open(bad, "w"))
    code = main(["run", "--config", str(bad), "--out", str(tmp_path / "o")])
    assert code == 1
    err = capsys.readouterr().err
    assert "params.nu" in err


def test_missing_config_exit_1(tmp_path):
    code = main(["run", "--config", str(tmp_path / "nope.json"),
                 "--out", str(tmp_path / "o")])
    assert code == 1


def test_smoke_run_all_flags_and_artifact_tree(smoke_run):
    rep = load_report(smoke_run / "report.json")
    assert all(rep["flags"].values())
    validate_report(rep)
    for sub in ("distances", "balls", "cutoffs", "solutions", "diagnostics",
                "plots"):
        assert (smoke_run / sub).is_dir()
    assert (smoke_run / "balls" / "ball0.csv").exists()
    assert (smoke_run / "plots" / "ball0_volumes.svg").exists()
    header = open(smoke_run / "balls" / "ball0.csv").readline().strip()
    assert header == "r,volume,doubling_ratio,delta,delta_over_r,g_of_r"


def test_report_byte_determinism(tmp_path, smoke_cfg_path, smoke_run):
    out2 = tmp_path / "again"
    code = main(["run", "--config", smoke_cfg_path, "--out", str(out2)])
    assert code == 0
    a = (smoke_run / "report.json").read_bytes()
    b = (out2 / "report.json").read_bytes()
    assert a == b


def test_compare_identical_reports_empty_diff(smoke_run):
    rep = load_report(smoke_run / "report.json")
    rows, flagged = compare(rep, rep)
    assert rows
    assert not flagged
    assert all(r[3] == 0.0 for r in rows)


def test_compare_schema_mismatch(smoke_run):
    rep = load_report(smoke_run / "report.json")
    other = dict(rep)
    other["schema_version"] = "999"
    with pytest.raises(SchemaMismatchError):
        compare(rep, other)


def test_compare_cli_exit_codes(tmp_path, smoke_run):
    rep_path = str(smoke_run / "report.json")
    assert main(["compare", rep_path, rep_path]) == 0


def test_growth_failure_exit_4(tmp_path, smoke_cfg_path, capsys):
    # exp(-a/|x|) degenerates too fast: delta(r)/r ~ r, so the growth
    # condition genuinely fails; requiring that flag must exit 4
    raw = json.load(open(smoke_cfg_path))
    raw["name"] = "exponential-growth-fail"
    raw["profile"] = {"kind": "exponential", "param": 0.1}
    raw["balls"] = [{"center": [0.0, 0.0], "r": 0.2, "on_axis": False}]
    raw["required_flags"] = ["growth_increasing"]
    p = tmp_path / "exp.json"
    json.dump(raw, open(p, "w"))
    code = main(["run", "--config", str(p), "--out", str(tmp_path / "o")])
    assert code == 4
    assert "growth_increasing" in capsys.readouterr().err


def test_solver_nonconvergence_exit_3(tmp_path, smoke_cfg_path):
    raw = json.load(open(smoke_cfg_path))
    raw["name"] = "stiff-no-convergence"
    raw["solver"]["theta"] = 1.0
    raw["solver"]["fp_tol"] = 1e-15
    raw["solver"]["fp_max_iter"] = 2
    raw["solver"]["boundary"] = {"kind": "trig", "amp": 0.8, "kx": 3.0,
                                 "ky": 2.0, "c": 2.0}
    p = tmp_path / "stiff.json"
    json.dump(raw, open(p, "w"))
    code = main(["run", "--config", str(p), "--out", str(tmp_path / "o3")])
    assert code == 3


def test_dist_subcommand(tmp_path, smoke_cfg_path):
    out = tmp_path / "dist"
    code = main(["dist", "--config", smoke_cfg_path, "--out", str(out)])
    assert code == 0
    files = sorted(os.listdir(out))
    assert any(f.startswith("ball0_eps") for f in files)


def test_balls_subcommand(tmp_path, smoke_cfg_path):
    out = tmp_path / "balls"
    code = main(["balls", "--config", smoke_cfg_path, "--out", str(out)])
    assert code == 0
    assert (out / "ball0.csv").exists()


def test_cutoff_subcommand(tmp_path, smoke_cfg_path):
    out = tmp_path / "cut"
    code = main(["cutoff", "--config", smoke_cfg_path, "--out", str(out)])
    assert code == 0
    assert (out / "ball0_cutoffs.csv").exists()


def test_solve_subcommand(tmp_path, smoke_cfg_path):
    out = tmp_path / "solve"
    code = main(["solve", "--config", smoke_cfg_path, "--out", str(out)])
    assert code == 0
    assert (out / "linear.csv").exists()
    assert (out / "quasilinear.csv").exists()


def test_threads_env_override(tmp_path, smoke_cfg_path, monkeypatch):
    monkeypatch.setenv("SUBUNIT_LAB_THREADS", "2")
    out = tmp_path / "thr"
    code = main(["dist", "--config", smoke_cfg_path, "--out", str(out)])
    assert code == 0
    monkeypatch.setenv("SUBUNIT_LAB_THREADS", "zebra")
    code = main(["dist", "--config", smoke_cfg_path, "--out",
                 str(tmp_path / "thr2")])
    assert code == 1


def test_installed_entry_point_runs():
    exe = shutil.which("subunit-lab")
    if exe is None:
        pytest.skip("entry point not on PATH")
    res = subprocess.run([exe, "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "compare" in res.stdout
