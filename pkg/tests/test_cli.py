import json
import os
import shutil
import sys

import pytest

# Add project root to path
sys.path.append(os.getcwd())

from src.cli import EXIT_INFEASIBLE, EXIT_INPUT, EXIT_OK, EXIT_OPTIMIZATION, exit_code_for, main
from src.errors import (
    EmptyArchive,
    LengthMismatch,
    LoopDefect,
    MechanismFileError,
    NoFeasibleIndividual,
    ZeroStanceLength,
)
from src.models import RunManifest
from src.storage import load_model, mechanism_file, write_model, write_trajectory_csv


@pytest.fixture
def four_bar_file(tmp_path, four_bar):
    """Crank-rocker mechanism file in a temporary directory."""
    return write_model(tmp_path / "four_bar.json", mechanism_file(four_bar, label="crank-rocker"))


def test_exit_codes():
    """Test each error family maps to its exit code."""
    assert exit_code_for(LoopDefect("x")) == EXIT_INFEASIBLE
    assert exit_code_for(ZeroStanceLength("x")) == EXIT_INFEASIBLE
    assert exit_code_for(NoFeasibleIndividual("x")) == EXIT_OPTIMIZATION
    assert exit_code_for(MechanismFileError("x")) == EXIT_INPUT
    assert exit_code_for(LengthMismatch("x")) == EXIT_INPUT
    assert exit_code_for(EmptyArchive("x")) == EXIT_OPTIMIZATION


def test_eval_json(four_bar_file, capsys):
    """Test eval prints a parseable performance report."""
    assert main(["eval", str(four_bar_file), "--json", "--n", "360"]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["l_s"] > 0.0
    assert report["mse"] is None
    assert set(report) >= {"h_s", "S", "I", "h_m", "psi2", "psi4"}


def test_eval_missing_file(tmp_path):
    """Test a missing mechanism file is an input error."""
    assert main(["eval", str(tmp_path / "missing.json")]) == EXIT_INPUT


def test_trace_writes_layout(four_bar_file, fixtures_dir, tmp_path):
    """Test trace writes the BT, the WT, positioned WTs and a manifest."""
    out = tmp_path / "trace"
    code = main(
        ["trace", str(four_bar_file), "--wt", "--layout", str(fixtures_dir / "quad.json"), "--out", str(out)]
    )
    assert code == EXIT_OK
    names = sorted(p.name for p in out.iterdir())
    expected = ["bt.csv", "layout.json", "manifest.json", "wt.csv"] + [f"wt_{leg}.csv" for leg in "ABCD"]
    assert names == sorted(expected)
    manifest = load_model(out / "manifest.json", RunManifest)
    assert "manifest.json" not in manifest.outputs
    assert len(manifest.outputs) == 7
    layout = json.loads((out / "layout.json").read_text())
    assert layout["gait"] == "quad"
    assert set(layout["dx"]) == {"A,B", "B,C", "C,D"}


def test_plot_trajectory_svg(tmp_path, cycloid_target):
    """Test plotting a CSV trajectory produces an SVG."""
    csv = write_trajectory_csv(tmp_path / "bt.csv", cycloid_target)
    svg = tmp_path / "bt.svg"
    assert main(["plot", str(csv), "--svg", str(svg)]) == EXIT_OK
    assert svg.read_text().lstrip().startswith("<?xml")


def test_plot_empty_archive(tmp_path):
    """Test an empty archive cannot be plotted."""
    archive = tmp_path / "archive.jsonl"
    archive.write_text("")
    assert main(["plot", str(archive), "--svg", str(tmp_path / "a.svg")]) == EXIT_INPUT


def test_check_fixture_directory(four_bar_file, tmp_path):
    """Test check audits every mechanism file in a directory."""
    (four_bar_file.parent / "not_a_mechanism.json").write_text('{"schema": 1, "legs": []}')
    report = tmp_path / "check.json"
    assert main(["check", "--fixtures", str(four_bar_file.parent), "--json", str(report)]) == EXIT_OK
    rows = json.loads(report.read_text())
    assert [r["file"] for r in rows] == ["four_bar.json"]
    assert rows[0]["defects_ok"] is True


def test_check_reports_documented_mismatch(fixtures_dir, tmp_path):
    """Test check carries a fixture's mismatch note next to the failure it explains."""
    root = tmp_path / "fixtures"
    root.mkdir()
    shutil.copy(fixtures_dir / "stephenson3.json", root / "stephenson3.json")
    report = tmp_path / "check.json"
    assert main(["check", "--fixtures", str(root), "--json", str(report)]) == EXIT_OK
    (row,) = json.loads(report.read_text())
    assert row["mismatch"].startswith("LoopDefect")
    assert row["error"].startswith("LoopDefect")


def test_check_missing_directory(tmp_path):
    """Test a missing fixture directory is an input error."""
    assert main(["check", "--fixtures", str(tmp_path / "none")]) == EXIT_INPUT


def test_synth_from_poor_x0_fails_handoff(four_bar_file, tmp_path):
    """Test an X0 far from the target cannot pass the subtask-2 bounds."""
    code = main(
        [
            "synth",
            "--topology",
            "FourBar",
            "--x0",
            str(four_bar_file),
            "--population",
            "8",
            "--generations",
            "1",
            "--seed",
            "1",
            "--out",
            str(tmp_path / "run"),
        ]
    )
    assert code == EXIT_OPTIMIZATION


def test_rtclm_tiny_budget_is_optimization_failure(tmp_path, monkeypatch):
    """Test an unreachable seven-bar run exits with the optimization code."""
    monkeypatch.setenv("CLM_OPTIMIZATION_SAMPLES", "64")
    code = main(
        [
            "rtclm",
            "--h6",
            "50",
            "--h4",
            "220",
            "--population",
            "6",
            "--generations",
            "1",
            "--seed",
            "2",
            "--out",
            str(tmp_path / "rtclm"),
        ]
    )
    assert code == EXIT_OPTIMIZATION


def test_sweep_writes_points(four_bar_file, tmp_path, monkeypatch):
    """Test a population sweep writes one point per value and a manifest."""
    monkeypatch.setenv("CLM_OPTIMIZATION_SAMPLES", "128")
    monkeypatch.setenv("CLM_MSE_SAMPLES", "128")
    out = tmp_path / "sweep"
    code = main(
        [
            "sweep",
            "--x0",
            str(four_bar_file),
            "--field",
            "population",
            "--values",
            "8",
            "10",
            "--generations",
            "1",
            "--seed",
            "2",
            "--out",
            str(out),
        ]
    )
    assert code == EXIT_OK
    points = json.loads((out / "sweep.json").read_text())
    assert [p["value"] for p in points] == [8.0, 10.0]
    assert load_model(out / "manifest.json", RunManifest).seed == 2
