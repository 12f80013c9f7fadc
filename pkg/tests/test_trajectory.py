import os
import sys

import numpy as np
import pytest

# Add project root to path
sys.path.append(os.getcwd())

from src.errors import KinematicFailure, MetricError, NoValidPair
from src.kinematics.linkage_core import trace_bt
from src.kinematics.trajectory import (
    LegLayout,
    Trajectory,
    bt_to_wt,
    find_feature_points,
    multi_wt_layout,
    step_length,
)
from src.metrics import stance_metrics


def test_trajectory_validates_shape():
    """Test malformed point arrays are rejected."""
    with pytest.raises(ValueError, match="shape"):
        Trajectory(points=np.zeros((100, 3)), period=2.0)
    with pytest.raises(ValueError, match="64"):
        Trajectory(points=np.zeros((10, 2)), period=2.0)
    with pytest.raises(ValueError, match="period"):
        Trajectory(points=np.zeros((100, 2)), period=0.0)


def test_trajectory_timing():
    """Test sample spacing for closed and open curves."""
    closed = Trajectory(points=np.zeros((100, 2)), period=2.0)
    assert closed.dt == pytest.approx(0.02)
    open_wt = Trajectory(points=np.zeros((51, 2)), period=2.0, closed=False)
    assert open_wt.dt == pytest.approx(0.02)
    assert open_wt.times[-1] == pytest.approx(1.0)


def test_trajectory_rolled_and_resampled(cycloid_target):
    """Test rolling moves the start and resampling keeps closure."""
    rolled = cycloid_target.rolled(10)
    assert np.allclose(rolled.points[0], cycloid_target.points[10])
    coarse = cycloid_target.resampled(180)
    assert coarse.n == 180
    assert np.allclose(coarse.points[0], cycloid_target.points[0])
    assert np.allclose(coarse.points[1], cycloid_target.points[2])


def test_feature_points_of_cycloid_target(cycloid_target):
    """Test landing, take-off and extremes of the reference curve."""
    fp = find_feature_points(cycloid_target)
    assert fp.t1 == 0
    assert fp.t2 == 180
    assert fp.t3 == 270
    assert fp.t4 == 0
    assert fp.t5 == 180
    assert cycloid_target.y[fp.t3] == pytest.approx(-100.0)


def test_feature_points_follow_rolling(cycloid_target):
    """Test feature indices move with the start sample."""
    fp = find_feature_points(cycloid_target.rolled(30))
    assert fp.t1 == 330
    assert fp.t2 == 150
    assert fp.t3 == 240


def test_stance_and_swing_indices(cycloid_target):
    """Test stance runs landing to take-off and swing the rest."""
    fp = find_feature_points(cycloid_target)
    stance = fp.stance_indices()
    swing = fp.swing_indices()
    assert stance[0] == 0 and stance[-1] == 180
    assert swing[0] == 180 and swing[-1] == 0
    assert len(stance) + len(swing) == 362


def test_feature_points_need_even_closed_curve(cycloid_target):
    """Test odd sample counts and open curves are rejected."""
    with pytest.raises(ValueError, match="even"):
        find_feature_points(cycloid_target.resampled(101))
    with pytest.raises(ValueError, match="closed"):
        find_feature_points(Trajectory(points=np.zeros((10, 2)), period=2.0, closed=False))


def test_feature_points_no_valid_pair():
    """Test a vertical segment has no landing left of its take-off."""
    t = np.linspace(0.0, 2.0 * np.pi, 64, endpoint=False)
    pts = np.column_stack([np.zeros(64), np.sin(t)])
    with pytest.raises(NoValidPair):
        find_feature_points(Trajectory(points=pts, period=2.0))


def test_bt_to_wt_endpoints(cycloid_target):
    """Test the WT starts at take-off and steps twice the stance length."""
    fp = find_feature_points(cycloid_target)
    wt = bt_to_wt(cycloid_target, fp)
    assert not wt.closed
    assert wt.n == 181
    assert np.allclose(wt.points[0], [300.0, 0.0])
    assert np.allclose(wt.points[-1], [-300.0, 0.0])
    assert step_length(wt) == pytest.approx(600.0)


def test_bt_to_wt_swing_height(cycloid_target):
    """Test the WT keeps the target's swing depth."""
    wt = bt_to_wt(cycloid_target, find_feature_points(cycloid_target))
    assert wt.y.min() == pytest.approx(-100.0)


def test_layout_validation():
    """Test layout leg counts and phases are checked."""
    with pytest.raises(ValueError, match="two"):
        LegLayout(origins={"A": (0.0, 0.0), "B": (0.0, 0.0), "C": (0.0, 0.0)})
    with pytest.raises(ValueError, match="phase"):
        LegLayout(origins={"A": (0.0, 0.0), "B": (0.0, 0.0)}, phases={"B": 0.25})
    with pytest.raises(ValueError, match="Trot"):
        LegLayout(
            origins={"A": (0.0, 0.0), "B": (0.0, 0.0), "C": (0.0, 0.0), "D": (0.0, 0.0)},
            phases={"A": 0.0, "B": 0.5, "C": 0.5, "D": 0.0},
        )
    with pytest.raises(ValueError, match="Unknown"):
        LegLayout(origins={"A": (0.0, 0.0), "Z": (0.0, 0.0)})


def test_layout_gaits():
    """Test the biped and trot constructors."""
    assert LegLayout.biped().gait == "biped"
    trot = LegLayout.trot(400.0)
    assert trot.gait == "quad"
    assert trot.legs == ["A", "B", "C", "D"]
    assert trot.phases == {"A": 0.0, "B": 0.5, "C": 0.0, "D": 0.5}


def test_multi_wt_layout_biped(cycloid_target):
    """Test coincident biped legs tile the stride half a period apart."""
    fp = find_feature_points(cycloid_target)
    result = multi_wt_layout(cycloid_target, fp, LegLayout.biped())
    assert [pw.leg for pw in result.wts] == ["A", "B"]
    assert result.dx == {"A,B": pytest.approx(-600.0)}
    a, b = result.wts
    assert np.allclose(b.wt.points, a.wt.points + [-300.0, 0.0])


def test_multi_wt_layout_origin_offset(cycloid_target):
    """Test moving leg B's origin shifts its x-difference by the same amount."""
    fp = find_feature_points(cycloid_target)
    base = multi_wt_layout(cycloid_target, fp, LegLayout.biped())
    moved = multi_wt_layout(cycloid_target, fp, LegLayout(origins={"A": (0.0, 0.0), "B": (50.0, 0.0)}))
    assert moved.dx["A,B"] - base.dx["A,B"] == pytest.approx(50.0)


def test_multi_wt_layout_trot(cycloid_target):
    """Test the quad layout reports all three x-differences."""
    fp = find_feature_points(cycloid_target)
    result = multi_wt_layout(cycloid_target, fp, LegLayout.trot(400.0))
    assert set(result.dx) == {"A,B", "B,C", "C,D"}
    assert result.dx["B,C"] == pytest.approx(300.0 - 400.0)
    assert result.dx["C,D"] == pytest.approx(-300.0)
    assert np.allclose(result.wts[2].wt.points, result.wts[0].wt.points + [-400.0, 0.0])


def _skewed_bt(n, phase=0.3, period=2.0):
    """Smooth closed curve whose landing falls between grid samples."""
    s = 2.0 * np.pi * np.arange(n) / n - phase
    pts = np.column_stack([-100.0 * np.cos(s) + 20.0 * np.sin(s), 40.0 * np.sin(s) + 10.0 * np.sin(2.0 * s)])
    return Trajectory(points=pts, period=period)


def test_feature_points_of_unit_circle():
    """Test landing, take-off and extremes of a counter-clockwise unit circle."""
    t = 2.0 * np.pi * np.arange(360) / 360
    circle = Trajectory(points=np.column_stack([np.cos(t), np.sin(t)]), period=1.0)
    fp = find_feature_points(circle)
    assert fp.t3 == 270
    assert fp.t4 == 180
    assert fp.t5 == 0
    assert {fp.t1, fp.t2} == {0, 180}
    assert circle.x[fp.t1] < circle.x[fp.t2]
    assert circle.y[fp.t1] == pytest.approx(0.0, abs=1e-12)
    assert circle.y[fp.t2] == pytest.approx(0.0, abs=1e-12)


def test_feature_points_stable_under_refinement():
    """Test doubling the sample count moves every feature by at most one coarse step."""
    coarse_bt, fine_bt = _skewed_bt(360), _skewed_bt(720)
    coarse = find_feature_points(coarse_bt).as_dict()
    fine = find_feature_points(fine_bt).as_dict()
    assert coarse.keys() == fine.keys()
    for key, idx in coarse.items():
        assert (idx is None) == (fine[key] is None), key
        if idx is None:
            continue
        d = abs(idx * coarse_bt.dt - fine[key] * fine_bt.dt) % coarse_bt.period
        assert min(d, coarse_bt.period - d) <= coarse_bt.dt + 1e-12, key


def test_step_length_is_twice_stance_length(four_bar):
    """Test WT x-extent equals 2 l_s over randomized crank-rocker BTs."""
    rng = np.random.default_rng(7)
    base = four_bar.as_array()
    names = four_bar.topology.parameter_names
    checked = 0
    for _ in range(200):
        values = base.copy()
        for i, name in enumerate(names):
            if name in ("b", "g"):
                values[i] = rng.uniform(-np.pi, np.pi)
            elif name in ("x_a", "y_a"):
                values[i] = rng.uniform(-50.0, 50.0)
            else:
                values[i] = base[i] * rng.uniform(0.85, 1.15)
        try:
            bt = trace_bt(four_bar.with_values(values), 360)
            fp = find_feature_points(bt)
            _, l_s, _ = stance_metrics(bt, fp)
        except (KinematicFailure, MetricError):
            continue
        wt = bt_to_wt(bt, fp)
        assert np.ptp(wt.x[[0, -1]]) == pytest.approx(2.0 * l_s, rel=1e-9)
        assert step_length(wt) == pytest.approx(2.0 * l_s, rel=1e-9)
        checked += 1
    assert checked >= 150
