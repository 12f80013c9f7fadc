import os
import sys

import numpy as np
import pytest

# Add project root to path
sys.path.append(os.getcwd())

from src.errors import KinematicFailure, LoopDefect, MetricError, NoFeasibleIndividual, TargetUnreached
from src.kinematics.linkage_core import Topology
from src.kinematics.target_curves import CycloidSpec, cycloid_bt_target
from src.kinematics.trajectory import FeaturePoints, find_feature_points
from src.rtclm import (
    ModeTag,
    RtclmProblem,
    StepwiseConfig,
    as_params,
    case_deviation,
    coupling_residual,
    coupling_solve,
    crank_margins,
    evaluate_design,
    feature_order_ok,
    is_extrapolation,
    mode_kinematics,
    motor_joints,
    stepwise_optimize,
    trace_mode,
)
from src.storage import load_mechanism

CASES = [f"rtclm_case{i}" for i in range(1, 6)]

KINEMATIC_FAILURES = {cls.__name__ for cls in KinematicFailure.__subclasses__()}
EVALUATION_FAILURES = KINEMATIC_FAILURES | {cls.__name__ for cls in MetricError.__subclasses__()} | {"ValueError"}

# r1..r6, x_d, y_d, a1, b1, a3, b3, dx_eh; the base loop cannot close
UNASSEMBLABLE = [100.0, 50.0, 50.0, 100.0, 100.0, 50.0, 150.0, 150.0, 150.0, 150.0, 100.0, 100.0, 150.0]


def _fp(t1, t2, t5, t4, n=360):
    return FeaturePoints(t1=t1, t2=t2, t3=t1, t4=t4, t5=t5, t6=None, t7=None, t8=None, n=n)


def _params(fixtures_dir, name):
    return load_mechanism(fixtures_dir / f"{name}.json")[1]


def test_feature_order_accepts_cyclic_order():
    """Test landing, take-off, right-most and left-most in cyclic order."""
    assert feature_order_ok(_fp(0, 90, 120, 300))
    assert feature_order_ok(_fp(100, 190, 220, 40))


def test_feature_order_rejects_swapped_extremes():
    """Test a right-most point before take-off violates the order."""
    assert not feature_order_ok(_fp(0, 200, 100, 300))
    assert not feature_order_ok(_fp(10, 10, 100, 300))


def test_feature_order_of_cycloid():
    """Test coincident features of the reference curve count as ordered."""
    bt = cycloid_bt_target(CycloidSpec(), 360)
    assert feature_order_ok(find_feature_points(bt))


def test_case_deviation_single_case():
    """Test absolute and relative deviation of one hand-made case."""
    absolute, relative = case_deviation([(50.5, 221.0, 50.0, 220.0)])
    assert absolute == pytest.approx(1.5)
    assert relative == pytest.approx(100.0 * (1.0 / 220.0 + 0.5 / 50.0))


def test_case_deviation_published_cases(fixtures_dir):
    """Test the published heights of the five cases stay within 1 mm and 7 %."""
    rows = []
    for name in CASES:
        mfile, _ = load_mechanism(fixtures_dir / f"{name}.json")
        rows.append((mfile.reported["h6"], mfile.reported["h4"], mfile.targets["h6"], mfile.targets["h4"]))
    absolute, relative = case_deviation(rows)
    assert absolute == pytest.approx(0.322)
    assert relative == pytest.approx(0.2797256, rel=1e-6)
    assert absolute <= 1.0 and relative <= 7.0


def test_case_deviation_validation():
    """Test empty input and non-positive targets are rejected."""
    with pytest.raises(ValueError):
        case_deviation([])
    with pytest.raises(ValueError, match="positive"):
        case_deviation([(50.0, 220.0, 0.0, 220.0)])


def test_is_extrapolation():
    """Test targets outside h6 = 50 and h4 in [220, 300] are flagged."""
    assert not is_extrapolation((50.0, 220.0))
    assert not is_extrapolation((50.0, 300.0))
    assert is_extrapolation((50.0, 310.0))
    assert is_extrapolation((60.0, 250.0))


def test_as_params_checks_topology(four_bar):
    """Test only seven-bar parameters are accepted."""
    assert as_params(UNASSEMBLABLE).topology is Topology.RTCLM
    with pytest.raises(ValueError, match="RtclmSevenBar"):
        as_params(four_bar)


def test_crank_margins_base_loop(fixtures_dir):
    """Test the base-loop full-rotation margin of case 1."""
    _, params = load_mechanism(fixtures_dir / "rtclm_case1.json")
    margins = crank_margins(params)
    assert len(margins) == 1
    lhs, rhs = margins[0]
    assert lhs == pytest.approx(308.5547, abs=1e-3)
    assert rhs == pytest.approx(316.0223, abs=1e-3)
    assert lhs < rhs


def test_evaluate_design_reports_failure():
    """Test an unassemblable design is marked failed rather than raising."""
    ev = evaluate_design(UNASSEMBLABLE, targets=(50.0, 220.0), samples=128)
    assert ev.failed
    assert ev.f1 == float("inf")
    assert ev.reason.startswith("ImaginaryBranch")
    assert evaluate_design([1.0, 2.0]).failed


def test_rtclm_problem_stages():
    """Test stage selection and failure penalties."""
    with pytest.raises(ValueError, match="stage"):
        RtclmProblem((50.0, 220.0), stage=3)
    stage1 = RtclmProblem((50.0, 220.0), stage=1, samples=128)
    stage2 = RtclmProblem((50.0, 220.0), stage=2, samples=128)
    assert len(stage2.constraint_names) > len(stage1.constraint_names)
    assert stage1.lower.shape == (13,)
    assert stage1.evaluate(np.array(UNASSEMBLABLE)).failed


def test_stepwise_config():
    """Test stage budgets, thresholds and seeds."""
    cfg = StepwiseConfig(seed=4)
    first, second = cfg.algo(1), cfg.algo(2)
    assert first.stop_thresholds == (float("inf"), 0.5)
    assert second.stop_thresholds == (0.5, 0.5)
    assert (first.seed, second.seed) == (4, 5)
    assert first.crossover_fraction == pytest.approx(2.0 / 13.0)
    with pytest.raises(ValueError, match="even"):
        StepwiseConfig(samples=361)
    with pytest.raises(ValueError, match="threshold"):
        StepwiseConfig(threshold=0.0)


def test_stepwise_optimize_strict_tiny_budget():
    """Test a one-generation run cannot reach the thresholds and raises in strict mode."""
    cfg = StepwiseConfig(population=6, generations=1, samples=64, seed=2)
    with pytest.raises((NoFeasibleIndividual, TargetUnreached)):
        stepwise_optimize((50.0, 220.0), cfg, strict=True)


def test_published_case1_solves(fixtures_dir):
    """Test the coupling equations of published case 1 close with positive derived lengths."""
    design = coupling_solve(_params(fixtures_dir, "rtclm_case1"))
    assert coupling_residual(design) < 1e-9
    assert design.residual < 1e-9
    assert min(design.a2, design.b2, design.df, design.ch) > 0.0
    assert 0.0 <= design.phi_a < 2.0 * np.pi
    for leg in ("left", "right"):
        flags = design.branch_flags(leg)
        assert len(flags) == Topology.RTCLM.dyad_count
        assert set(flags) <= {1, -1}


def test_case1_switching_state_is_level(fixtures_dir):
    """Test E sits at equal height in both legs with the left leg behind."""
    design = coupling_solve(_params(fixtures_dir, "rtclm_case1"))
    e_left = motor_joints(design, ModeTag.AUXILIARY, [0.0], "left")["E"][0]
    e_right = motor_joints(design, ModeTag.AUXILIARY, [0.0], "right")["E"][0]
    assert e_left[1] == pytest.approx(e_right[1], abs=1e-6)
    assert e_left[0] < e_right[0]


@pytest.mark.parametrize("leg", ["left", "right"])
def test_case1_modes_share_motor_joints_at_switching_state(fixtures_dir, leg):
    """Test both topologies place F and H identically at the switching angles of each leg."""
    design = coupling_solve(_params(fixtures_dir, "rtclm_case1"))
    primary = motor_joints(design, ModeTag.PRIMARY, [design.switch_angle(ModeTag.PRIMARY, leg)], leg)
    auxiliary = motor_joints(design, ModeTag.AUXILIARY, [design.switch_angle(ModeTag.AUXILIARY, leg)], leg)
    assert np.allclose(primary["H"], primary["E"] + design.eh, atol=1e-6)
    for joint in ("C", "E", "F", "H"):
        assert np.allclose(primary[joint], auxiliary[joint], atol=1e-6)
    assert np.linalg.norm(primary["F"][0] - primary["D"][0]) == pytest.approx(design.df, abs=1e-9)
    assert np.linalg.norm(primary["H"][0] - primary["C"][0]) == pytest.approx(design.ch, abs=1e-9)


def test_case1_auxiliary_crank_cannot_turn(fixtures_dir):
    """Test the documented auxiliary-loop mismatch of case 1 shows in the margins and the trace."""
    mfile, params = load_mechanism(fixtures_dir / "rtclm_case1.json")
    assert mfile.mismatch.startswith("LoopDefect")
    design = coupling_solve(params)
    lhs, rhs = crank_margins(design)[1]
    assert design.eh_length >= params["dx_eh"]
    assert lhs >= rhs
    with pytest.raises(LoopDefect):
        trace_mode(design, ModeTag.AUXILIARY, 360)
    ev = evaluate_design(params, targets=(50.0, 220.0), samples=360)
    assert ev.failed
    assert ev.reason.split(":")[0] in ("LoopDefect", "BranchDiscontinuity")


@pytest.mark.parametrize("name", CASES)
def test_published_case_evaluation(fixtures_dir, name):
    """Test each published case either evaluates fully or fails as its mismatch note records."""
    mfile, params = load_mechanism(fixtures_dir / f"{name}.json")
    ev = evaluate_design(params, targets=(mfile.targets["h6"], mfile.targets["h4"]), samples=360)
    if mfile.mismatch:
        assert ev.failed
        assert ev.reason.split(":")[0] in KINEMATIC_FAILURES
        return
    if ev.failed:
        assert ev.reason.split(":")[0] in EVALUATION_FAILURES
        return
    assert np.isfinite(ev.h6) and np.isfinite(ev.h4)
    assert coupling_residual(ev.design) < 1e-9
    pose = mode_kinematics(ev.design, ModeTag.PRIMARY, ev.design.switch_angle(ModeTag.PRIMARY))
    assert pose.residual < 1e-6
    assert len(pose.branch_flags) == Topology.RTCLM.dyad_count


def test_case_mismatch_notes_follow_auxiliary_loop_lengths(fixtures_dir):
    """Test exactly the cases whose FG-GE dyad cannot reach the farthest F carry a mismatch note."""
    for name in CASES:
        mfile, params = load_mechanism(fixtures_dir / f"{name}.json")
        blocked = params["r6"] + params["dx_eh"] > params["r4"] + params["r5"]
        assert bool(mfile.mismatch) == blocked
