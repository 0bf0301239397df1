from __future__ import annotations

import json

import pytest

from brlab.cli import EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, SOLUTIONS_FILE, main
from brlab.pipeline import save_solutions
from brlab.report import load_report, read_csv
from conftest import CONFIGS

SMALL = {
    "schema": "brlab.config/1",
    "grid": {"n": 1, "h": "1/32"},
    "potential": "quartic",
    "scenario": {"kind": "two-phase"},
    "epsilons": [0.2, 0.1],
}


def write_config(tmp_path, raw, name="run.json"):
    p = tmp_path / name
    p.write_text(json.dumps(raw))
    return p


def test_constant_scenario_runs_clean(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["analyze", "--config", str(CONFIGS / "constant.json"), "--out", str(out)]) == EXIT_OK
    report = load_report(out / "report.json")
    assert report["status"] == "ok"
    assert report["summary"]["concentration"]["sigma_size"] == 0
    assert all(c["passed"] for c in report["checks"])
    for name in report["tables"].values():
        assert (out / name).exists()
    assert "FAIL" not in capsys.readouterr().out


def test_solve_writes_solutions_and_tables(tmp_path):
    cfg = write_config(tmp_path, SMALL)
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
    rows = read_csv(tmp_path / "o" / "convergence.csv")
    assert [r["converged"] for r in rows] == ["true", "true"]
    assert (tmp_path / "o" / SOLUTIONS_FILE).exists()


def test_sweep_output_does_not_depend_on_worker_count(tmp_path):
    cfg = write_config(tmp_path, SMALL)
    for k in (1, 2):
        assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / f"w{k}"), "--workers", str(k)]) == EXIT_OK
    for name in ("convergence.csv", "energies.csv"):
        assert (tmp_path / "w1" / name).read_bytes() == (tmp_path / "w2" / name).read_bytes()
    # the reports differ only in the recorded worker count
    r1, r2 = (load_report(tmp_path / f"w{k}" / "report.json") for k in (1, 2))
    assert (r1["config"].pop("workers"), r2["config"].pop("workers")) == (1, 2)
    assert r1 == r2


def test_solver_budget_exhaustion_is_exit_3(tmp_path):
    cfg = write_config(tmp_path, dict(SMALL, solver={"max_sweeps": 1}))
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_SOLVER
    report = load_report(tmp_path / "o" / "report.json")
    assert report["status"] == "solver_failure"
    assert report["unconverged_epsilons"] == [0.2, 0.1]


def test_analyze_after_solver_failure_writes_partial_report(tmp_path):
    cfg = write_config(tmp_path, dict(SMALL, solver={"max_sweeps": 1}))
    assert main(["analyze", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_SOLVER
    assert load_report(tmp_path / "o" / "report.json")["status"] == "solver_failure"


def test_validate_with_starved_solver_fails_checks(tmp_path):
    raw = json.loads((CONFIGS / "validate.json").read_text())
    raw["solver"] = {"max_sweeps": 1}
    cfg = write_config(tmp_path, raw)
    assert main(["validate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CHECK_FAILED
    assert load_report(tmp_path / "o" / "report.json")["status"] == "check_failure"


def test_validate_passes_on_the_oracle(capsys):
    assert main(["validate", "--config", str(CONFIGS / "validate.json")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "PASS solver_order" in out and "FAIL" not in out


def test_validate_rejects_quartic(tmp_path, capsys):
    cfg = write_config(tmp_path, SMALL)
    assert main(["validate", "--config", str(cfg)]) == EXIT_CONFIG
    assert "potential" in capsys.readouterr().err


@pytest.mark.parametrize(
    "raw, message",
    [
        (dict(SMALL, epsilons=[0.2, 1 / 32]), "epsilon >= 2h guard"),
        (dict(SMALL, grid={"n": 5, "h": 0.1}), "grid.n"),
        (dict(SMALL, colour="blue"), "colour"),
    ],
)
def test_bad_config_is_exit_2(tmp_path, capsys, raw, message):
    cfg = write_config(tmp_path, raw)
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert message in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_missing_config_file_is_exit_2(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "absent.json"), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_output_directory_is_required(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("BRLAB_OUT", raising=False)
    cfg = write_config(tmp_path, SMALL)
    assert main(["solve", "--config", str(cfg)]) == EXIT_CONFIG
    assert "BRLAB_OUT" in capsys.readouterr().err


def test_environment_output_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("BRLAB_OUT", str(tmp_path / "env"))
    cfg = write_config(tmp_path, SMALL)
    assert main(["solve", "--config", str(cfg)]) == EXIT_OK
    assert (tmp_path / "env" / "report.json").exists()


def test_config_output_beats_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("BRLAB_OUT", str(tmp_path / "env"))
    cfg = write_config(tmp_path, dict(SMALL, output=str(tmp_path / "cfg")))
    assert main(["solve", "--config", str(cfg)]) == EXIT_OK
    assert (tmp_path / "cfg" / "report.json").exists()
    assert not (tmp_path / "env").exists()


@pytest.mark.slow
def test_report_on_canonical_fixture(tmp_path, pn_layer_family):
    """Render the PN layer-trace fixture from pre-computed solutions."""
    cfg, sols = pn_layer_family
    out = tmp_path / "pn"
    save_solutions(out / SOLUTIONS_FILE, cfg, sols)
    code = main(["report", "--config", str(CONFIGS / "layer_trace_pn.json"), "--out", str(out)])
    assert code == EXIT_OK
    report = load_report(out / "report.json")
    assert report["kind"] == "report"
    assert {"face_traces.png", "monotonicity.png", "energies.png"} <= set(report["figures"])
    for name in report["figures"]:
        assert (out / "figures" / name).read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    for name in ("face_traces.dat", "monotonicity.dat", "energies.dat", "stationarity.dat"):
        text = (out / "data" / name).read_text()
        assert text.startswith("# ")
    mono = read_csv(out / "monotonicity.csv")
    assert mono and all(float(r["I"]) >= 0 for r in mono)


def test_analyze_is_deterministic(tmp_path):
    cfg = write_config(tmp_path, dict(SMALL, epsilons=[0.2, 0.1, 0.0625], analysis={"eta0": 0.5, "sigma_r": 0.25}))
    for k in (1, 2):
        assert main(["analyze", "--config", str(cfg), "--out", str(tmp_path / f"a{k}")]) in (EXIT_OK, EXIT_CHECK_FAILED)
    names = sorted(p.name for p in (tmp_path / "a1").glob("*.csv")) + ["report.json"]
    assert len(names) > 3
    for name in names:
        assert (tmp_path / "a1" / name).read_bytes() == (tmp_path / "a2" / name).read_bytes(), name
