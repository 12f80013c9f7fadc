import json
import os
import sys

import numpy as np
import pytest

# Add project root to path
sys.path.append(os.getcwd())

from src.errors import MechanismFileError
from src.kinematics.linkage_core import Topology
from src.kinematics.trajectory import Trajectory, bt_to_wt, find_feature_points
from src.models import MechanismFile, RunManifest
from src.optimization.moo import Individual, ParetoArchive, Provenance
from src.storage import (
    atomic_write_text,
    config_hash,
    load_collection,
    load_layout,
    load_mechanism,
    load_model,
    load_target,
    mechanism_file,
    params_from_file,
    read_archive_jsonl,
    read_trajectory_csv,
    write_archive_jsonl,
    write_manifest,
    write_model,
    write_trajectory_csv,
)


def _circle():
    t = np.linspace(0.0, 2.0 * np.pi, 64, endpoint=False)
    return Trajectory(points=np.column_stack([np.cos(t), np.sin(t)]), period=2.0)


def _x3_payload(fixtures_dir):
    return json.loads((fixtures_dir / "stephenson1_x3.json").read_text())


def test_load_published_x3(fixtures_dir):
    """Test the subtask-3 Stephenson-I file loads with its reported values."""
    mfile, params = load_mechanism(fixtures_dir / "stephenson1_x3.json")
    assert mfile.label == "stephenson1-x3"
    assert params.topology is Topology.STEPHENSON_I
    assert params["r12"] == 115.54
    assert params["r6"] == -4.21
    assert mfile.reported["mse"] == 3.97
    assert not mfile.suspect


def test_json_syntax_error_reports_line(tmp_path):
    """Test malformed JSON names the offending line."""
    path = tmp_path / "broken.json"
    path.write_text('{\n"schema": 1,\n"topology": ,\n}\n')
    with pytest.raises(MechanismFileError, match=":3:"):
        load_mechanism(path)


def test_missing_file(tmp_path):
    """Test an absent file is an input error."""
    with pytest.raises(MechanismFileError, match="cannot read"):
        load_mechanism(tmp_path / "nope.json")


def test_missing_parameter(tmp_path, fixtures_dir):
    """Test a parameter set without r12 is rejected."""
    payload = _x3_payload(fixtures_dir)
    del payload["params"]["r12"]
    path = tmp_path / "short.json"
    path.write_text(json.dumps(payload))
    with pytest.raises(MechanismFileError, match="r12"):
        load_mechanism(path)


def test_unknown_topology(tmp_path, fixtures_dir):
    """Test an unknown topology tag is rejected."""
    payload = dict(_x3_payload(fixtures_dir), topology="EightBar")
    path = tmp_path / "eight.json"
    path.write_text(json.dumps(payload))
    with pytest.raises(MechanismFileError, match="unknown topology"):
        load_mechanism(path)


def test_unsupported_schema(tmp_path, fixtures_dir):
    """Test a future schema version is rejected."""
    payload = dict(_x3_payload(fixtures_dir), schema=2)
    path = tmp_path / "future.json"
    path.write_text(json.dumps(payload))
    with pytest.raises(MechanismFileError, match="Unsupported schema"):
        load_mechanism(path)


def test_mechanism_file_round_trip(tmp_path, four_bar):
    """Test a written mechanism reads back with the same parameters."""
    path = write_model(tmp_path / "four_bar.json", mechanism_file(four_bar, label="crank-rocker"))
    mfile, params = load_mechanism(path)
    assert params == four_bar
    assert mfile.label == "crank-rocker"
    assert json.loads(path.read_text())["schema"] == 1


def test_closed_trajectory_csv(tmp_path, cycloid_target):
    """Test a bench trajectory survives the CSV format."""
    path = write_trajectory_csv(tmp_path / "bt.csv", cycloid_target)
    assert path.read_text().splitlines()[0] == "t,x,y"
    back = read_trajectory_csv(path)
    assert back.closed
    assert back.n == 360
    assert back.period == pytest.approx(2.0, rel=1e-6)
    assert np.allclose(back.points, cycloid_target.points, atol=1e-8)


def test_open_trajectory_csv(tmp_path, cycloid_target):
    """Test a walking trajectory keeps its phase line and stays open."""
    wt = bt_to_wt(cycloid_target, find_feature_points(cycloid_target))
    path = write_trajectory_csv(tmp_path / "wt.csv", wt, phase="swing")
    assert path.read_text().startswith("# phase=swing\n")
    back = read_trajectory_csv(path)
    assert not back.closed
    assert back.period == pytest.approx(wt.period, rel=1e-6)
    assert np.allclose(back.points, wt.points, atol=1e-8)


def test_archive_jsonl(tmp_path):
    """Test archive members are written one per line and read back."""
    members = [
        Individual(genome=np.array([1.0, 2.0]), objectives=np.array([0.5, 3.0]), constraint_violations=np.zeros(1)),
        Individual(genome=np.array([2.0, 1.0]), objectives=np.array([1.5, 1.0]), constraint_violations=np.zeros(1)),
    ]
    path = write_archive_jsonl(tmp_path / "archive.jsonl", ParetoArchive(members, Provenance("s2", 40, 9)))
    assert len(path.read_text().splitlines()) == 2
    records = read_archive_jsonl(path)
    assert records[1].genome == [2.0, 1.0]
    assert records[0].subtask == "s2"
    assert records[0].seed == 9


def test_archive_jsonl_bad_line(tmp_path):
    """Test a corrupt archive line is reported with its number."""
    path = tmp_path / "bad.jsonl"
    path.write_text('{"genome": [1.0]}\n')
    with pytest.raises(MechanismFileError, match=":1:"):
        read_archive_jsonl(path)


def test_manifest(tmp_path):
    """Test the manifest lists outputs relative to the run directory."""
    write_trajectory_csv(tmp_path / "bt.csv", _circle())
    write_manifest(tmp_path, "trace --n=360", {"n": 360}, [tmp_path / "bt.csv"], 1.23456, seed=7)
    manifest = load_model(tmp_path / "manifest.json", RunManifest)
    assert manifest.outputs == ["bt.csv"]
    assert manifest.seed == 7
    assert manifest.wall_time_s == pytest.approx(1.235)
    assert manifest.config_hash == config_hash({"n": 360})
    assert manifest.status == "ok"


def test_config_hash_ignores_key_order():
    """Test equal configurations hash equally."""
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})
    assert len(config_hash({})) == 64


def test_six_bar_collection(fixtures_dir):
    """Test the alternative-optimizer table and its flagged rows."""
    collection = load_collection(fixtures_dir / "six_bar_algorithms.json")
    assert len(collection.mechanisms) == 18
    assert sum(m.suspect for m in collection.mechanisms) == 4
    assert all(m.topology == "StephensonI" for m in collection.mechanisms)


def test_rtclm_collection_rejects_negative_link(fixtures_dir):
    """Test the seven-bar table loads and its negative link row cannot be built."""
    collection = load_collection(fixtures_dir / "rtclm_algorithms.json")
    assert len(collection.mechanisms) == 30
    assert sum(m.suspect for m in collection.mechanisms) == 5
    bad = next(m for m in collection.mechanisms if m.label == "case1-moea-d-cmt")
    with pytest.raises(MechanismFileError, match="r5"):
        params_from_file(bad)
    good = next(m for m in collection.mechanisms if not m.suspect)
    assert params_from_file(good).topology is Topology.RTCLM


def test_other_methods_bounds(fixtures_dir):
    """Test the comparison table carries its search bounds."""
    collection = load_collection(fixtures_dir / "other_methods.json")
    assert len(collection.mechanisms) == 5
    assert collection.bounds["r1"] == [30.0, 500.0]


def test_target_and_layouts(fixtures_dir):
    """Test the target and layout fixtures."""
    target = load_target(fixtures_dir / "cycloid.json")
    assert target.n == 360
    assert target.y.min() == pytest.approx(-100.0)
    assert load_layout(fixtures_dir / "biped.json").gait == "biped"
    quad = load_layout(fixtures_dir / "quad.json")
    assert quad.gait == "quad"
    assert quad.origins["C"] == (-400.0, 0.0)


def test_invalid_layout(tmp_path):
    """Test a biped with a quarter-period phase is rejected."""
    path = tmp_path / "layout.json"
    path.write_text(
        json.dumps(
            {
                "schema": 1,
                "legs": [
                    {"id": "A", "origin": [0, 0], "phase": 0.0},
                    {"id": "B", "origin": [0, 0], "phase": 0.25},
                ],
            }
        )
    )
    with pytest.raises(MechanismFileError, match="phase"):
        load_layout(path)


def test_atomic_write_leaves_no_temp_files(tmp_path):
    """Test only the destination file remains after a write."""
    target = tmp_path / "nested" / "out.txt"
    atomic_write_text(target, "first")
    atomic_write_text(target, "second")
    assert target.read_text() == "second"
    assert [p.name for p in target.parent.iterdir()] == ["out.txt"]


def test_mechanism_model_rejects_bad_direction():
    """Test the crank direction must be +1 or -1."""
    with pytest.raises(ValueError):
        MechanismFile(topology="FourBar", params={}, direction=0)
