"""
Reconfigurable-topology seven-bar leg mechanism.

The leg runs in two modes. In the primary mode joint H is locked, the
quadrilateral D-C-F-H moves as one rigid body and crank AB drives a
six-bar. In the auxiliary mode joint A is locked at the switching angle,
the base becomes the frame and crank HF drives the four-bar H-F-G-E.

Joint layout (A at the origin):

    B = r1 (cos phi, sin phi)            crank AB
    D = (x_d, y_d)                       ground pivot
    C = dyad(B, D, r2, r3)               coupler BC, rocker DC
    E = dyad(B, C, a1, b1)               ternary coupler BCE
    F = dyad(D, C, |DF|, b2)             rigid D-C-F-H body (primary)
    H = dyad(C, F, |CH|, r6)
    G = dyad(F, E, r4, r5)               links FG and GE
    P = dyad(E, G, a3, b3)               foot on link GE

At the switching state the left leg sits at crank angle phi_A and the
right leg at phi_A + pi, with E at equal height in both. H = E + (dx_EH,
dy_EH) in both legs, and the coupling equations make |DF|, |CF| and |CH|
equal across the two legs, so a single set of link lengths serves both.
Each leg keeps its own assembly flags for F and H: the right leg's D-C-F
triangle is either the left one rotated about D or its mirror image.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq, root

from src.errors import (
    BranchDiscontinuity,
    ImaginaryBranch,
    KinematicFailure,
    LoopDefect,
    MetricError,
    NoFeasibleIndividual,
    NoRoot,
    TargetUnreached,
)
from src.kinematics.linkage_core import (
    DEFAULT_JUMP_FACTOR,
    DEFAULT_PERIOD,
    DefectReport,
    ParamVector,
    Pose,
    Topology,
    check_branch_continuity,
    crank_angles,
    crank_condition,
    default_bounds,
    loop_residual,
    side_of_line,
    solve_dyad_rrr,
)
from src.kinematics.trajectory import FeaturePoints, Trajectory, find_feature_points
from src.metrics import performance_report
from src.models import PerformanceReport
from src.optimization.moo import AlgoConfig, Evaluation, Individual, ParetoArchive, evolve

logger = logging.getLogger(__name__)

RTCLM_LOWER, RTCLM_UPPER = default_bounds(Topology.RTCLM)

COUPLING_TOL = 1e-9
SWITCH_SCAN = 720

ORDER_VIOLATION = 1e3
MIN_CONTACT_ANGLE = 15.0
MIN_PSI2 = 20.0
OBSTACLE = (25.0, 25.0)

DEMONSTRATED_H6 = 50.0
DEMONSTRATED_H4 = (220.0, 300.0)

STAGE1_CONSTRAINTS = ("crank_primary", "crank_auxiliary", "order_primary", "theta1_primary", "theta2_primary")
STAGE2_CONSTRAINTS = STAGE1_CONSTRAINTS + (
    "order_auxiliary",
    "theta1_auxiliary",
    "theta2_auxiliary",
    "crossing_height",
    "psi2",
)


class ModeTag(str, Enum):
    """Active topology of the seven-bar."""

    PRIMARY = "primary"
    AUXILIARY = "auxiliary"


@dataclass(frozen=True, eq=False)
class RtclmDesign:
    """Free parameters plus every quantity the coupling solve derives."""

    params: ParamVector
    phi_a: float
    phi_h_left: float
    phi_h_right: float
    dy_eh: float
    a2: float
    b2: float
    df: float
    ch: float
    left_branches: Tuple[int, int]
    right_branches: Tuple[int, int]
    residual: float

    @property
    def mirrored(self) -> bool:
        """True when the right leg assembles D-C-F-H as a mirror image of the left."""
        return self.left_branches != self.right_branches

    def branch_flags(self, leg: str = "left") -> Tuple[int, ...]:
        """Flags of the C, E, F, H, G and foot dyads of one leg in the primary mode."""
        branch_f, branch_h = self.right_branches if _check_leg(leg) else self.left_branches
        return (1, 1, branch_f, branch_h, 1, 1)

    @property
    def eh(self) -> np.ndarray:
        return np.array([self.params["dx_eh"], self.dy_eh])

    @property
    def eh_length(self) -> float:
        return float(np.hypot(*self.eh))

    def derived(self) -> Dict[str, float]:
        """Derived block as stored in design files."""
        return {
            "phi_a": self.phi_a,
            "phi_h_left": self.phi_h_left,
            "phi_h_right": self.phi_h_right,
            "dy_eh": self.dy_eh,
            "a2": self.a2,
            "b2": self.b2,
            "df": self.df,
            "ch": self.ch,
        }

    def switch_angle(self, mode: ModeTag, leg: str = "left") -> float:
        """Crank angle of ``mode`` at the switching state."""
        right = _check_leg(leg)
        if ModeTag(mode) is ModeTag.PRIMARY:
            return self.phi_a + (np.pi if right else 0.0)
        return self.phi_h_right if right else self.phi_h_left


def _check_leg(leg: str) -> bool:
    if leg not in ("left", "right"):
        raise ValueError(f"leg must be 'left' or 'right', got {leg!r}")
    return leg == "right"


def as_params(x: Union[ParamVector, Sequence[float]]) -> ParamVector:
    """Coerce a 13-vector into seven-bar parameters."""
    if isinstance(x, ParamVector):
        if x.topology is not Topology.RTCLM:
            raise ValueError(f"Expected RtclmSevenBar parameters, got {x.topology.value}")
        return x
    return ParamVector(Topology.RTCLM, tuple(float(v) for v in x))


def _unit(angle) -> np.ndarray:
    angle = np.asarray(angle, dtype=float)
    return np.stack([np.cos(angle), np.sin(angle)], axis=-1)


def _base(params: ParamVector, phi: np.ndarray) -> Dict[str, np.ndarray]:
    """Crank-driven joints A, B, C, D, E for an array of crank angles."""
    v = params.as_dict()
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    n = len(phi)
    a = np.zeros((n, 2))
    d = np.tile([v["x_d"], v["y_d"]], (n, 1))
    b = v["r1"] * _unit(phi)
    c = solve_dyad_rrr(b, d, v["r2"], v["r3"], 1, angles=phi)
    e = solve_dyad_rrr(b, c, v["a1"], v["b1"], 1, angles=phi)
    return {"A": a, "B": b, "C": c, "D": d, "E": e}


def switching_angle(params: ParamVector) -> float:
    """
    Smallest crank angle phi_A in [0, 2 pi) where E is level across legs.

    Solves y_E(phi) = y_E(phi + pi) with x_E(phi) < x_E(phi + pi) by
    bracketing on a uniform scan and refining with Brent's method.

    Raises:
        LoopDefect: If the base loop fails at some scanned angle
        NoRoot: If no level configuration exists
    """
    phi = 2.0 * np.pi * np.arange(SWITCH_SCAN) / SWITCH_SCAN
    step = phi[1]
    e_left = _base(params, phi)["E"]
    e_right = _base(params, phi + np.pi)["E"]
    gap = e_left[:, 1] - e_right[:, 1]

    def level(angle: float) -> float:
        return float(_base(params, [angle])["E"][0, 1] - _base(params, [angle + np.pi])["E"][0, 1])

    def left_of_partner(angle: float) -> bool:
        return bool(_base(params, [angle])["E"][0, 0] < _base(params, [angle + np.pi])["E"][0, 0])

    for i in range(SWITCH_SCAN):
        g0 = gap[i]
        g1 = gap[(i + 1) % SWITCH_SCAN]
        if g0 == 0.0:
            candidate = phi[i]
        elif g0 * g1 < 0.0:
            candidate = brentq(level, phi[i], phi[i] + step, xtol=1e-14)
        else:
            continue
        if left_of_partner(candidate):
            return float(candidate % (2.0 * np.pi))
    raise NoRoot("No crank angle levels E across the two legs")


@dataclass
class _Root:
    phi_l: float
    phi_r: float
    residual: float
    mirrored: bool


def _coupling_equations(
    h_l: np.ndarray, h_r: np.ndarray, c_l: np.ndarray, c_r: np.ndarray, d: np.ndarray, r6: float
) -> Callable[[np.ndarray], np.ndarray]:
    def equations(z: np.ndarray) -> np.ndarray:
        f_l = h_l + r6 * _unit(z[0])
        f_r = h_r + r6 * _unit(z[1])
        return np.array(
            [
                np.linalg.norm(f_r - d) - np.linalg.norm(f_l - d),
                np.linalg.norm(f_r - c_r) - np.linalg.norm(f_l - c_l),
            ]
        )

    return equations


def _right_motor_point(
    f_l: np.ndarray, c_l: np.ndarray, c_r: np.ndarray, d: np.ndarray, mirrored: bool
) -> np.ndarray:
    """F of the right leg with |DF| and |CF| copied from the left leg."""
    delta = np.arctan2(*(c_r - d)[::-1]) - np.arctan2(*(c_l - d)[::-1])
    cos, sin = np.cos(delta), np.sin(delta)
    v = f_l - d
    v = np.array([cos * v[0] - sin * v[1], sin * v[0] + cos * v[1]])
    if mirrored:
        m = (c_r - d) / np.linalg.norm(c_r - d)
        v = 2.0 * (v @ m) * m - v
    return d + v


def _coupling_roots(
    h_l: np.ndarray, h_r: np.ndarray, c_l: np.ndarray, c_r: np.ndarray, d: np.ndarray, r6: float
) -> List[_Root]:
    """
    Every (phi_H_l, phi_H_r) pair closing the two motor-crank equations.

    For a given phi_H_l the right-leg F is fixed up to the mirror choice,
    so each choice leaves one equation |F_r - H_r| = r6 in phi_H_l, which
    is bracketed on a uniform scan and refined with Brent's method. Roots
    the bracketing leaves above tolerance are polished by hybrid Powell.
    """
    equations = _coupling_equations(h_l, h_r, c_l, c_r, d, r6)
    scan = 2.0 * np.pi * np.arange(SWITCH_SCAN + 1) / SWITCH_SCAN
    roots: List[_Root] = []
    for mirrored in (False, True):

        def gap(phi_l: float) -> float:
            f_r = _right_motor_point(h_l + r6 * _unit(phi_l), c_l, c_r, d, mirrored)
            return float(np.linalg.norm(f_r - h_r) - r6)

        values = np.array([gap(p) for p in scan])
        for i in range(SWITCH_SCAN):
            if values[i] == 0.0:
                phi_l = scan[i]
            elif values[i] * values[i + 1] < 0.0:
                phi_l = brentq(gap, scan[i], scan[i + 1], xtol=1e-14)
            else:
                continue
            f_r = _right_motor_point(h_l + r6 * _unit(phi_l), c_l, c_r, d, mirrored)
            z = np.array([phi_l, np.arctan2(*(f_r - h_r)[::-1])])
            res = float(np.max(np.abs(equations(z))))
            if res >= COUPLING_TOL:
                sol = root(equations, z, method="hybr", options={"xtol": 1e-14})
                z, res = sol.x, float(np.max(np.abs(equations(sol.x))))
            if res < COUPLING_TOL:
                z = np.mod(z, 2.0 * np.pi)
                roots.append(_Root(float(z[0]), float(z[1]), res, mirrored))
    return roots


def coupling_solve(x: Union[ParamVector, Sequence[float]]) -> RtclmDesign:
    """
    Solve the dimensional coupling between the two legs.

    dy_EH follows in closed form from |H_r - C_r| = |H_l - C_l|; the motor
    crank angles (phi_H_l, phi_H_r) then solve |F_r - D| = |F_l - D| and
    |F_r - C_r| = |F_l - C_l|. Each leg records its own assembly flags for
    F and H. Roots where both legs share the same flags come first, then
    roots are taken in order of (phi_H_l, phi_H_r); the first one giving
    positive derived lengths is returned.

    Raises:
        ImaginaryBranch: If the base loop cannot close during the solve
        NoRoot: If no root gives a physically valid mechanism
    """
    params = as_params(x)
    v = params.as_dict()
    try:
        phi_a = switching_angle(params)
        left = _base(params, [phi_a])
        right = _base(params, [phi_a + np.pi])
    except LoopDefect as e:
        raise ImaginaryBranch(f"Base loop fails during coupling solve: {e}") from e

    c_l, e_l = left["C"][0], left["E"][0]
    c_r, e_r = right["C"][0], right["E"][0]
    d = left["D"][0]
    u = e_r - c_r
    w = e_l - c_l
    k = u - w
    if abs(k[1]) < 1e-12:
        raise NoRoot("dy_EH is undetermined: E-C offsets differ only in x")
    dx = v["dx_eh"]
    dy = float((w @ w - u @ u - 2.0 * k[0] * dx) / (2.0 * k[1]))
    eh = np.array([dx, dy])
    h_l, h_r = e_l + eh, e_r + eh
    r6 = v["r6"]

    roots = _coupling_roots(h_l, h_r, c_l, c_r, d, r6)
    if not roots:
        raise NoRoot("Coupling equations have no root")

    for r in sorted(roots, key=lambda r: (r.mirrored, round(r.phi_l, 9), round(r.phi_r, 9))):
        f_l = h_l + r6 * _unit(r.phi_l)
        f_r = h_r + r6 * _unit(r.phi_r)
        b2 = float(np.linalg.norm(f_l - c_l))
        df = float(np.linalg.norm(f_l - d))
        ch = float(np.linalg.norm(h_l - c_l))
        a2 = float(np.linalg.norm(h_l - d))
        if min(b2, df, ch, a2) <= COUPLING_TOL:
            continue
        left_branches = (int(side_of_line(d, c_l, f_l)), int(side_of_line(c_l, f_l, h_l)))
        right_branches = (int(side_of_line(d, c_r, f_r)), int(side_of_line(c_r, f_r, h_r)))
        if 0 in left_branches + right_branches:
            continue
        third = abs(np.linalg.norm(h_r - c_r) - np.linalg.norm(h_l - c_l))
        design = RtclmDesign(
            params=params,
            phi_a=phi_a,
            phi_h_left=r.phi_l,
            phi_h_right=r.phi_r,
            dy_eh=dy,
            a2=a2,
            b2=b2,
            df=df,
            ch=ch,
            left_branches=left_branches,
            right_branches=right_branches,
            residual=float(max(r.residual, third)),
        )
        logger.debug(
            f"coupling_solved: phi_a={phi_a:.6f}, phi_h=({r.phi_l:.6f}, {r.phi_r:.6f}), "
            f"dy_eh={dy:.4f}, roots={len(roots)}, mirrored={design.mirrored}"
        )
        return design
    raise NoRoot("No coupling root gives a physically valid mechanism")


def coupling_residual(design: RtclmDesign) -> float:
    """Re-substitute the derived angles into the three coupling equations."""
    params = design.params
    left = _base(params, [design.phi_a])
    right = _base(params, [design.phi_a + np.pi])
    c_l, c_r, d = left["C"][0], right["C"][0], left["D"][0]
    h_l = left["E"][0] + design.eh
    h_r = right["E"][0] + design.eh
    r6 = params["r6"]
    f_l = h_l + r6 * _unit(design.phi_h_left)
    f_r = h_r + r6 * _unit(design.phi_h_right)
    return float(
        max(
            abs(np.linalg.norm(f_r - d) - np.linalg.norm(f_l - d)),
            abs(np.linalg.norm(f_r - c_r) - np.linalg.norm(f_l - c_l)),
            abs(np.linalg.norm(h_r - c_r) - np.linalg.norm(h_l - c_l)),
        )
    )


def _links(design: RtclmDesign, mode: ModeTag) -> List[Tuple[str, str, float]]:
    v = design.params.as_dict()
    tail = [
        ("H", "F", v["r6"]),
        ("F", "G", v["r4"]),
        ("G", "E", v["r5"]),
        ("E", "P", v["a3"]),
        ("G", "P", v["b3"]),
    ]
    if mode is ModeTag.AUXILIARY:
        return tail
    return [
        ("A", "B", v["r1"]),
        ("B", "C", v["r2"]),
        ("D", "C", v["r3"]),
        ("B", "E", v["a1"]),
        ("C", "E", v["b1"]),
        ("D", "F", design.df),
        ("C", "F", design.b2),
        ("C", "H", design.ch),
    ] + tail


def _primary_motor(design: RtclmDesign, phi: np.ndarray, leg: str) -> Dict[str, np.ndarray]:
    _, _, branch_f, branch_h, _, _ = design.branch_flags(leg)
    joints = _base(design.params, phi)
    c, d = joints["C"], joints["D"]
    f = solve_dyad_rrr(d, c, design.df, design.b2, branch_f, angles=phi)
    h = solve_dyad_rrr(c, f, design.ch, design.params["r6"], branch_h, angles=phi)
    joints.update({"F": f, "H": h})
    return joints


def _auxiliary_motor(design: RtclmDesign, phi: np.ndarray, leg: str) -> Dict[str, np.ndarray]:
    frame = _base(design.params, [design.switch_angle(ModeTag.PRIMARY, leg)])
    joints = {name: np.repeat(pt, len(phi), axis=0) for name, pt in frame.items()}
    h = joints["E"] + design.eh
    joints.update({"H": h, "F": h + design.params["r6"] * _unit(phi)})
    return joints


def motor_joints(
    design: RtclmDesign, mode: ModeTag, phi: np.ndarray, leg: str = "left"
) -> Dict[str, np.ndarray]:
    """Joints A to F and H of one mode, without the FG-GE dyad and the foot."""
    _check_leg(leg)
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    if ModeTag(mode) is ModeTag.PRIMARY:
        return _primary_motor(design, phi, leg)
    return _auxiliary_motor(design, phi, leg)


def mode_joints(
    design: RtclmDesign, mode: ModeTag, phi: np.ndarray, leg: str = "left"
) -> Dict[str, np.ndarray]:
    """Joint arrays of the active topology over crank angles ``phi``."""
    v = design.params.as_dict()
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    joints = motor_joints(design, mode, phi, leg)
    f, e = joints["F"], joints["E"]
    g = solve_dyad_rrr(f, e, v["r4"], v["r5"], 1, angles=phi)
    p = solve_dyad_rrr(e, g, v["a3"], v["b3"], 1, angles=phi)
    joints.update({"G": g, "P": p})
    return joints


def mode_kinematics(design: RtclmDesign, mode: ModeTag, crank_angle: float, leg: str = "left") -> Pose:
    """
    Pose of the seven-bar in one mode.

    In the primary mode ``crank_angle`` is the angle of AB with H locked;
    in the auxiliary mode it is the angle of HF with A locked at the leg's
    switching angle.

    Raises:
        LoopDefect: If a dyad fails at this angle
    """
    mode = ModeTag(mode)
    joints = mode_joints(design, mode, [crank_angle], leg)
    residual = float(loop_residual(joints, _links(design, mode))[0])
    row = {name: pts[0] for name, pts in joints.items()}
    return Pose(
        crank_angle=float(crank_angle),
        joints=row,
        foot=row["P"],
        branch_flags=design.branch_flags(leg),
        residual=residual,
    )


def trace_mode(
    design: RtclmDesign,
    mode: ModeTag,
    n: int,
    period: float = DEFAULT_PERIOD,
    direction: int = 1,
    leg: str = "left",
    jump_factor: float = DEFAULT_JUMP_FACTOR,
) -> Trajectory:
    """
    Foot bench trajectory over one revolution of the mode's crank.

    Raises:
        LoopDefect: If a dyad fails at some angle
        BranchDiscontinuity: If the foot jumps between branches
    """
    phi = crank_angles(n, direction)
    foot = mode_joints(design, ModeTag(mode), phi, leg)["P"]
    check_branch_continuity(foot, design.params.scale, jump_factor)
    return Trajectory(points=foot, period=period)


def crank_margins(design_or_params: Union[RtclmDesign, ParamVector]) -> List[Tuple[float, float]]:
    """
    (lhs, rhs) of the full-rotation test for each loop.

    The base loop uses (r1; r2, r3, |AD|). The motor loop needs dy_EH and is
    only available from a solved design.
    """
    if isinstance(design_or_params, RtclmDesign):
        params = design_or_params.params
    else:
        params = design_or_params
    v = params.as_dict()
    margins = [crank_condition(v["r1"], v["r2"], v["r3"], float(np.hypot(v["x_d"], v["y_d"])))]
    if isinstance(design_or_params, RtclmDesign):
        margins.append(crank_condition(v["r6"], v["r4"], v["r5"], design_or_params.eh_length))
    return margins


def rtclm_defect_report(
    params: ParamVector, n_sweep: int = 3600, jump_factor: float = DEFAULT_JUMP_FACTOR
) -> DefectReport:
    """Crank test on both loops plus loop and branch sweeps in both modes."""
    params = as_params(params)
    margins = crank_margins(params)
    has_loop = False
    has_branch = False
    failing: Optional[float] = None
    try:
        design = coupling_solve(params)
        margins = crank_margins(design)
        for mode in ModeTag:
            trace_mode(design, mode, n_sweep, jump_factor=jump_factor)
    except LoopDefect as e:
        has_loop = True
        failing = e.angle
    except BranchDiscontinuity:
        has_branch = True
    except KinematicFailure as e:
        logger.debug(f"rtclm_defect_report: coupling failed: {e}")
        has_loop = True

    return DefectReport(
        has_crank_defect=any(lhs >= rhs for lhs, rhs in margins),
        has_loop_defect=has_loop,
        has_branch_defect=has_branch,
        first_failing_angle=failing,
        crank_margins=margins,
    )


def feature_order_ok(fp: FeaturePoints) -> bool:
    """
    True if landing, take-off, right-most and left-most points follow each
    other cyclically in that order.

    Coincident samples count as ordered; a left-most point on the landing
    sample closes the cycle.
    """
    n = fp.n
    t2 = (fp.t2 - fp.t1) % n
    t5 = (fp.t5 - fp.t1) % n
    t4 = (fp.t4 - fp.t1 - 1) % n + 1
    return 0 < t2 <= t5 <= t4


@dataclass
class RtclmEvaluation:
    """Objectives, violations and reports of one seven-bar design."""

    f1: float
    f2: float
    h4: float = float("nan")
    h6: float = float("nan")
    violations: Dict[str, float] = field(default_factory=dict)
    reports: Dict[str, PerformanceReport] = field(default_factory=dict)
    design: Optional[RtclmDesign] = None
    failed: bool = False
    reason: Optional[str] = None

    def total_violation(self, names: Sequence[str]) -> float:
        return float(sum(self.violations.get(name, 0.0) for name in names))


def _mode_violations(bt: Trajectory, report: PerformanceReport, mode: ModeTag) -> Dict[str, float]:
    fp = find_feature_points(bt)
    return {
        f"order_{mode.value}": 0.0 if feature_order_ok(fp) else ORDER_VIOLATION,
        f"theta1_{mode.value}": max(0.0, MIN_CONTACT_ANGLE - report.theta1),
        f"theta2_{mode.value}": max(0.0, MIN_CONTACT_ANGLE - report.theta2),
    }


def evaluate_design(
    x: Union[ParamVector, Sequence[float]],
    targets: Tuple[float, float] = (DEMONSTRATED_H6, DEMONSTRATED_H4[0]),
    samples: int = 360,
    period: float = DEFAULT_PERIOD,
) -> RtclmEvaluation:
    """
    Crossing-height objectives and constraint violations of a design.

    f1 = (h4 - h4_target)^2 from the auxiliary-mode walking trajectory and
    f2 = (h6 - h6_target)^2 from the primary mode. Never raises: kinematic
    or metric failures return an evaluation marked failed.

    Args:
        x: 13 free parameters
        targets: (h6_target, h4_target) in mm
        samples: Crank samples per mode trace
        period: Crank period (s)
    """
    h6_t, h4_t = targets
    try:
        params = as_params(x)
        design = coupling_solve(params)
        traces = {mode: trace_mode(design, mode, samples, period=period) for mode in ModeTag}
        reports = {mode: performance_report(traces[mode], obstacle=OBSTACLE) for mode in ModeTag}
    except (KinematicFailure, MetricError, ValueError) as e:
        return RtclmEvaluation(f1=float("inf"), f2=float("inf"), failed=True, reason=f"{type(e).__name__}: {e}")

    margins = crank_margins(design)
    violations = {
        "crank_primary": max(0.0, margins[0][0] - margins[0][1]),
        "crank_auxiliary": max(0.0, margins[1][0] - margins[1][1]),
    }
    for mode in ModeTag:
        violations.update(_mode_violations(traces[mode], reports[mode], mode))
    aux = reports[ModeTag.AUXILIARY]
    violations["crossing_height"] = max(0.0, aux.h_m / 4.0 - aux.h_bar)
    violations["psi2"] = max(0.0, MIN_PSI2 - aux.psi2)

    h6 = reports[ModeTag.PRIMARY].h_m
    h4 = aux.h_m
    return RtclmEvaluation(
        f1=(h4 - h4_t) ** 2,
        f2=(h6 - h6_t) ** 2,
        h4=h4,
        h6=h6,
        violations=violations,
        reports={mode.value: reports[mode] for mode in ModeTag},
        design=design,
    )


class RtclmProblem:
    """Stage-specific optimization problem over the 13 free parameters."""

    def __init__(
        self,
        targets: Tuple[float, float],
        stage: int = 1,
        f2_ceiling: Optional[float] = None,
        samples: int = 360,
        period: float = DEFAULT_PERIOD,
    ):
        if stage not in (1, 2):
            raise ValueError("stage must be 1 or 2")
        self.targets = targets
        self.stage = stage
        self.f2_ceiling = f2_ceiling
        self.samples = samples
        self.period = period
        self.lower = RTCLM_LOWER.copy()
        self.upper = RTCLM_UPPER.copy()
        self.n_obj = 2
        self.constraint_names = STAGE1_CONSTRAINTS if stage == 1 else STAGE2_CONSTRAINTS

    def evaluate(self, genome: np.ndarray) -> Evaluation:
        ev = evaluate_design(genome, self.targets, self.samples, self.period)
        if ev.failed:
            return Evaluation(objectives=np.zeros(2), failed=True, info={"reason": ev.reason})
        violations = [ev.violations[name] for name in self.constraint_names]
        if self.f2_ceiling is not None:
            violations.append(ev.f2 - self.f2_ceiling)
        return Evaluation(
            objectives=np.array([ev.f1, ev.f2]),
            violations=np.array(violations),
            info={"h4": ev.h4, "h6": ev.h6},
        )


@dataclass
class StepwiseConfig:
    """Budget of the two-stage seven-bar optimization."""

    population: int = 50
    generations: int = 50
    crossover_fraction: float = 2.0 / 13.0
    mutation_fraction: float = 2.0 / 13.0
    seed: int = 0
    samples: int = 360
    period: float = DEFAULT_PERIOD
    jobs: int = 1
    threshold: float = 0.5
    allowance: float = 0.5
    sbx_eta: float = 15.0
    mutation_eta: float = 20.0

    def __post_init__(self):
        """Validate configuration."""
        if self.threshold <= 0 or self.allowance < 0:
            raise ValueError("threshold must be positive and allowance non-negative")
        if self.samples < 64 or self.samples % 2:
            raise ValueError("samples must be an even number >= 64")

    def algo(self, stage: int) -> AlgoConfig:
        first = float("inf") if stage == 1 else self.threshold
        return AlgoConfig(
            population=self.population,
            generations=self.generations,
            crossover_fraction=self.crossover_fraction,
            mutation_fraction=self.mutation_fraction,
            seed=self.seed + stage - 1,
            stop_thresholds=(first, self.threshold),
            sbx_eta=self.sbx_eta,
            mutation_eta=self.mutation_eta,
            jobs=self.jobs,
        )


@dataclass
class StepwiseResult:
    """Decided design of a stepwise run."""

    targets: Tuple[float, float]
    params: ParamVector
    evaluation: RtclmEvaluation
    archives: Dict[str, ParetoArchive]
    reached: bool
    extrapolation: bool

    @property
    def h6(self) -> float:
        return self.evaluation.h6

    @property
    def h4(self) -> float:
        return self.evaluation.h4


def is_extrapolation(targets: Tuple[float, float]) -> bool:
    """True when targets leave the demonstrated h6 = 50, h4 in [220, 300] range."""
    h6_t, h4_t = targets
    low, high = DEMONSTRATED_H4
    return not (np.isclose(h6_t, DEMONSTRATED_H6) and low <= h4_t <= high)


def _best(members: Sequence[Individual]) -> Individual:
    return min(members, key=lambda m: (m.total_violation, float(np.sum(m.objectives)), tuple(m.genome)))


def stepwise_optimize(
    targets: Tuple[float, float],
    cfg: Optional[StepwiseConfig] = None,
    progress_callback: Optional[Callable[[str, int, int], None]] = None,
    strict: bool = False,
) -> StepwiseResult:
    """
    Two-stage optimization toward crossing-height targets.

    Stage 1 drives the primary-mode height under the crank, order and
    contact-angle constraints. Stage 2 starts from the stage-1 archive,
    bounds f2 by the stage-1 best plus ``allowance`` and adds the
    auxiliary-mode order, contact-angle, mean-height and crossing
    probability constraints. Each stage stops once its objectives fall
    below ``threshold``.

    Args:
        targets: (h6_target, h4_target) in mm
        cfg: Budget; population 50, 50 generations and fractions 2/13 by default
        progress_callback: Called with (stage, generation, cap)
        strict: Raise TargetUnreached instead of returning an unreached result

    Raises:
        NoFeasibleIndividual: If stage 1 finds no feasible design
        TargetUnreached: Only when ``strict`` is set
    """
    cfg = cfg or StepwiseConfig()
    extrapolation = is_extrapolation(targets)
    if extrapolation:
        logger.warning(f"rtclm_extrapolation: targets={targets} outside the demonstrated range")

    def progress_for(stage: str):
        def progress(gen: int, cap: int) -> None:
            if progress_callback:
                progress_callback(stage, gen, cap)

        return progress

    stage1 = evolve(
        RtclmProblem(targets, stage=1, samples=cfg.samples, period=cfg.period),
        cfg.algo(1),
        subtask="rtclm_s1",
        progress_callback=progress_for("rtclm_s1"),
    )
    feasible1 = [m for m in stage1.individuals if m.feasible]
    if not feasible1:
        raise NoFeasibleIndividual("Stage 1 produced no feasible seven-bar design")
    best1 = min(m.objectives[1] for m in feasible1)

    seeds = [m.genome for m in sorted(feasible1, key=lambda m: tuple(m.genome))]
    stage2 = evolve(
        RtclmProblem(
            targets, stage=2, f2_ceiling=best1 + cfg.allowance, samples=cfg.samples, period=cfg.period
        ),
        cfg.algo(2),
        initial=seeds,
        subtask="rtclm_s2",
        progress_callback=progress_for("rtclm_s2"),
    )
    feasible2 = [m for m in stage2.individuals if m.feasible]
    chosen = _best(feasible2) if feasible2 else _best(feasible1)

    evaluation = evaluate_design(chosen.genome, targets, cfg.samples, cfg.period)
    reached = bool(
        feasible2
        and not evaluation.failed
        and evaluation.f1 < cfg.threshold
        and evaluation.f2 < cfg.threshold
    )
    result = StepwiseResult(
        targets=targets,
        params=as_params(chosen.genome),
        evaluation=evaluation,
        archives={"rtclm_s1": stage1, "rtclm_s2": stage2},
        reached=reached,
        extrapolation=extrapolation,
    )
    logger.info(
        f"rtclm_completed: targets={targets}, h6={evaluation.h6:.3f}, h4={evaluation.h4:.3f}, "
        f"reached={reached}, seed={cfg.seed}"
    )
    if not reached:
        message = f"Targets {targets} not reached within {cfg.generations} generations"
        logger.warning(f"rtclm_target_unreached: {message}")
        if strict:
            raise TargetUnreached(message, result=result)
    return result


def case_deviation(cases: Sequence[Tuple[float, float, float, float]]) -> Tuple[float, float]:
    """
    Mean absolute (mm) and relative (%) crossing-height deviation.

    Args:
        cases: (h6, h4, h6_target, h4_target) per case

    Returns:
        (sum of |h4 - h4t| + |h6 - h6t| over cases / n,
         100 * sum of |h4 - h4t| / h4t + |h6 - h6t| / h6t over cases / n)
    """
    if not cases:
        raise ValueError("No cases given")
    absolute = 0.0
    relative = 0.0
    for h6, h4, h6_t, h4_t in cases:
        if h6_t <= 0 or h4_t <= 0:
            raise ValueError("Targets must be positive")
        absolute += abs(h4 - h4_t) + abs(h6 - h6_t)
        relative += abs(h4 - h4_t) / h4_t + abs(h6 - h6_t) / h6_t
    n = len(cases)
    return absolute / n, 100.0 * relative / n
