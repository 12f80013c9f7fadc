"""
Planar linkage topologies and their kinematics.

Every supported leg is a crank-driven single-DoF chain solved by RRR dyad
(Assur group) decomposition. Joint connectivity for each topology is the
canonical diagram documented in README.md ("Canonical linkage geometry").
All solvers are vectorized over crank angles.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.errors import BranchDiscontinuity, DegenerateDyad, LoopDefect
from src.kinematics.trajectory import Trajectory

logger = logging.getLogger(__name__)

DEFAULT_PERIOD = 2.0
DEFAULT_JUMP_FACTOR = 0.2
MIN_TRACE_SAMPLES = 64


class Topology(str, Enum):
    """Supported leg linkages."""

    FOUR_BAR = "FourBar"
    WATT_I = "WattI"
    STEPHENSON_I = "StephensonI"
    STEPHENSON_III = "StephensonIII"
    RTCLM = "RtclmSevenBar"

    @property
    def parameter_names(self) -> Tuple[str, ...]:
        return PARAMETER_NAMES[self]

    @property
    def arity(self) -> int:
        return len(PARAMETER_NAMES[self])

    @property
    def dyad_count(self) -> int:
        """Number of free branch flags for a trace."""
        return DYAD_COUNT[self]

    @property
    def is_six_bar(self) -> bool:
        return self in (Topology.WATT_I, Topology.STEPHENSON_I, Topology.STEPHENSON_III)


_SIX_BAR_NAMES = ("b", "g", "x_a", "y_a") + tuple(f"r{i}" for i in range(1, 13))

PARAMETER_NAMES: Dict[Topology, Tuple[str, ...]] = {
    Topology.FOUR_BAR: ("b", "g", "x_a", "y_a") + tuple(f"r{i}" for i in range(1, 7)),
    Topology.WATT_I: _SIX_BAR_NAMES,
    Topology.STEPHENSON_I: _SIX_BAR_NAMES,
    Topology.STEPHENSON_III: _SIX_BAR_NAMES,
    Topology.RTCLM: (
        "r1", "r2", "r3", "r4", "r5", "r6",
        "x_d", "y_d", "a1", "b1", "a3", "b3", "dx_eh",
    ),
}

# Parameters that must be strictly positive link lengths
POSITIVE_NAMES: Dict[Topology, Tuple[str, ...]] = {
    Topology.FOUR_BAR: ("r1", "r2", "r3", "r4"),
    Topology.WATT_I: ("r1", "r2", "r3", "r4", "r9", "r10"),
    Topology.STEPHENSON_I: ("r1", "r2", "r3", "r4", "r9", "r10"),
    Topology.STEPHENSON_III: ("r1", "r2", "r3", "r4", "r9", "r10"),
    Topology.RTCLM: ("r1", "r2", "r3", "r4", "r5", "r6", "a1", "b1", "a3", "b3"),
}

ANGLE_NAMES = ("b", "g")
POSITION_NAMES = ("x_a", "y_a", "x_d", "y_d")

DYAD_COUNT: Dict[Topology, int] = {
    Topology.FOUR_BAR: 1,
    Topology.WATT_I: 2,
    Topology.STEPHENSON_I: 2,
    Topology.STEPHENSON_III: 2,
    # C, E, F, H, G and the foot in primary mode
    Topology.RTCLM: 6,
}


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Dimensional parameters of one mechanism (mm and rad)."""

    topology: Topology
    values: Tuple[float, ...]

    def __post_init__(self):
        """Validate arity and positive lengths."""
        topology = Topology(self.topology)
        values = tuple(float(v) for v in self.values)
        if len(values) != topology.arity:
            raise ValueError(
                f"{topology.value} expects {topology.arity} parameters, got {len(values)}"
            )
        if not all(np.isfinite(values)):
            raise ValueError("Parameters must be finite")
        named = dict(zip(topology.parameter_names, values))
        for name in POSITIVE_NAMES[topology]:
            if named[name] <= 0:
                raise ValueError(f"{name} must be > 0 for {topology.value}, got {named[name]}")
        object.__setattr__(self, "topology", topology)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_mapping(cls, topology: Topology, params: Mapping[str, float]) -> "ParamVector":
        """Build from a name -> value mapping; every name must be present."""
        topology = Topology(topology)
        missing = [n for n in topology.parameter_names if n not in params]
        if missing:
            raise ValueError(f"Missing parameters for {topology.value}: {missing}")
        extra = sorted(set(params) - set(topology.parameter_names))
        if extra:
            raise ValueError(f"Unknown parameters for {topology.value}: {extra}")
        return cls(topology, tuple(params[n] for n in topology.parameter_names))

    def __getitem__(self, name: str) -> float:
        return self.values[self.topology.parameter_names.index(name)]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ParamVector):
            return NotImplemented
        return self.topology == other.topology and self.values == other.values

    def __hash__(self) -> int:
        return hash((self.topology, self.values))

    def as_dict(self) -> Dict[str, float]:
        return dict(zip(self.topology.parameter_names, self.values))

    def as_array(self) -> np.ndarray:
        return np.array(self.values, dtype=float)

    def with_values(self, values: Sequence[float]) -> "ParamVector":
        return ParamVector(self.topology, tuple(values))

    def scaled(self, factor: float) -> "ParamVector":
        """Scale every length and position entry; angles are unchanged."""
        if factor <= 0:
            raise ValueError("Scale factor must be positive")
        return self.with_values(
            v if n in ANGLE_NAMES else v * factor
            for n, v in zip(self.topology.parameter_names, self.values)
        )

    def translated(self, dx: float, dy: float) -> "ParamVector":
        """Move the crank pivot A by (dx, dy)."""
        if self.topology is Topology.RTCLM:
            raise ValueError("RTCLM designs keep A at the origin")
        named = self.as_dict()
        named["x_a"] += dx
        named["y_a"] += dy
        return ParamVector.from_mapping(self.topology, named)

    @property
    def scale(self) -> float:
        """Largest absolute link length or offset, used for jump thresholds."""
        return max(
            abs(v)
            for n, v in zip(self.topology.parameter_names, self.values)
            if n not in ANGLE_NAMES and n not in POSITION_NAMES
        )


@dataclass(eq=False)
class Pose:
    """Joint positions at one crank angle."""

    crank_angle: float
    joints: Dict[str, np.ndarray]
    foot: np.ndarray
    branch_flags: Tuple[int, ...]
    residual: float = 0.0

    @property
    def joint_names(self) -> List[str]:
        return list(self.joints)


@dataclass
class DefectReport:
    """Outcome of the crank / loop / branch defect audit."""

    has_crank_defect: bool
    has_loop_defect: bool
    has_branch_defect: bool
    first_failing_angle: Optional[float] = None
    crank_margins: List[Tuple[float, float]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.has_crank_defect or self.has_loop_defect or self.has_branch_defect)


def solve_dyad_rrr(
    p1,
    p2,
    l1: float,
    l2: float,
    branch: int,
    angles: Optional[np.ndarray] = None,
    tol: float = 1e-12,
) -> np.ndarray:
    """
    Solve an RRR dyad by circle-circle intersection.

    Args:
        p1: Base point(s) of the first link, shape (2,) or (N, 2)
        p2: Base point(s) of the second link, same shape as ``p1``
        l1: Length from ``p1`` to the solved joint
        l2: Length from ``p2`` to the solved joint
        branch: +1 for the solution left of the directed line p1 -> p2, -1 for right
        angles: Crank angles matching the rows, used to report the failing angle
        tol: Relative tolerance accepting tangent circles

    Returns:
        Solved joint(s), same shape as ``p1``

    Raises:
        LoopDefect: If the circles are disjoint or one contains the other
        DegenerateDyad: If p1 and p2 coincide
    """
    if l1 <= 0 or l2 <= 0:
        raise ValueError("Dyad link lengths must be positive")
    if branch not in (1, -1):
        raise ValueError(f"Branch must be +1 or -1, got {branch}")

    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    delta = p2 - p1
    d = np.hypot(delta[..., 0], delta[..., 1])

    if np.any(d <= tol * (l1 + l2)):
        raise DegenerateDyad("Dyad base points coincide")

    slack = tol * (l1 + l2)
    bad = (d > l1 + l2 + slack) | (d < abs(l1 - l2) - slack)
    if np.any(bad):
        idx = int(np.argmax(np.atleast_1d(bad)))
        angle = None if angles is None else float(np.atleast_1d(angles)[idx])
        raise LoopDefect(
            f"Circles do not intersect (|p1p2|={np.atleast_1d(d)[idx]:.6g}, l1={l1}, l2={l2})",
            angle=angle,
        )

    a = (l1 * l1 - l2 * l2 + d * d) / (2.0 * d)
    h = np.sqrt(np.clip(l1 * l1 - a * a, 0.0, None))
    u = delta / d[..., None]
    n = np.stack([-u[..., 1], u[..., 0]], axis=-1)
    return p1 + a[..., None] * u + (branch * h)[..., None] * n


def offset_point(p, q, along: float, across: float) -> np.ndarray:
    """Point at ``along`` on the P->Q axis and ``across`` on its left normal."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    delta = q - p
    length = np.hypot(delta[..., 0], delta[..., 1])
    u = delta / length[..., None]
    n = np.stack([-u[..., 1], u[..., 0]], axis=-1)
    return p + along * u + across * n


def side_of_line(p1, p2, point) -> np.ndarray:
    """Sign of the cross product (p2 - p1) x (point - p1); +1 is left."""
    p1, p2, point = (np.asarray(v, dtype=float) for v in (p1, p2, point))
    d = p2 - p1
    r = point - p1
    return np.sign(d[..., 0] * r[..., 1] - d[..., 1] * r[..., 0])


def crank_condition(crank: float, a: float, b: float, c: float) -> Tuple[float, float]:
    """
    Grashof-type full-rotation test for a crank-driven four-bar loop.

    The crank is fully rotatable when crank + 2 max(a, b, c) < a + b + c.

    Returns:
        (lhs, rhs) of the strict inequality
    """
    return crank + 2.0 * max(a, b, c), a + b + c


def _no_seven_bar_branches(branches: Optional[Sequence[int]]) -> None:
    if branches is not None:
        raise ValueError("Seven-bar assembly flags come from the coupling solve and cannot be set")


def _resolve_branches(topology: Topology, branches: Optional[Sequence[int]]) -> Tuple[int, ...]:
    if branches is None:
        return (1,) * topology.dyad_count
    flags = tuple(int(b) for b in branches)
    if len(flags) != topology.dyad_count:
        raise ValueError(
            f"{topology.value} needs {topology.dyad_count} branch flags, got {len(flags)}"
        )
    if any(b not in (1, -1) for b in flags):
        raise ValueError("Branch flags must be +1 or -1")
    return flags


def solve_chain(
    params: ParamVector, angles: np.ndarray, branches: Optional[Sequence[int]] = None
) -> Tuple[Dict[str, np.ndarray], List[Tuple[str, str, float]]]:
    """
    Solve every joint of a four-bar or six-bar for an array of crank angles.

    Returns:
        (joints, links) where joints maps names to (N, 2) arrays ("P" is the
        foot) and links lists the (joint, joint, length) pairs whose lengths
        close the kinematic loops
    """
    topology = params.topology
    if topology is Topology.RTCLM:
        raise ValueError("Use src.rtclm.mode_kinematics for the seven-bar")
    flags = _resolve_branches(topology, branches)
    v = params.as_dict()
    phi = np.atleast_1d(np.asarray(angles, dtype=float))
    n = len(phi)

    A = np.tile([v["x_a"], v["y_a"]], (n, 1))
    D = A + v["r4"] * np.array([np.cos(v["g"]), np.sin(v["g"])])
    B = A + v["r1"] * np.column_stack([np.cos(phi + v["b"]), np.sin(phi + v["b"])])
    C = solve_dyad_rrr(B, D, v["r2"], v["r3"], flags[0], angles=phi)

    joints: Dict[str, np.ndarray] = {"A": A, "B": B, "C": C, "D": D}
    links = [("A", "B", v["r1"]), ("B", "C", v["r2"]), ("D", "C", v["r3"]), ("A", "D", v["r4"])]

    if topology is Topology.FOUR_BAR:
        joints["P"] = offset_point(B, C, v["r5"], v["r6"])
        return joints, links

    if topology is Topology.WATT_I:
        E = offset_point(B, C, v["r5"], v["r6"])
        F = offset_point(D, C, v["r7"], v["r8"])
        G = solve_dyad_rrr(E, F, v["r9"], v["r10"], flags[1], angles=phi)
        joints.update(E=E, F=F, G=G, P=offset_point(E, G, v["r12"], v["r11"]))
        links += [("E", "G", v["r9"]), ("F", "G", v["r10"])]
    elif topology is Topology.STEPHENSON_I:
        E = offset_point(B, C, v["r5"], v["r6"])
        O = offset_point(A, D, v["r7"], v["r8"])
        G = solve_dyad_rrr(E, O, v["r9"], v["r10"], flags[1], angles=phi)
        joints.update(E=E, O=O, G=G, P=offset_point(E, G, v["r12"], v["r11"]))
        links += [("E", "G", v["r9"]), ("O", "G", v["r10"])]
    else:
        F = offset_point(A, B, v["r5"], v["r6"])
        K = offset_point(D, C, v["r7"], v["r8"])
        G = solve_dyad_rrr(F, K, v["r9"], v["r10"], flags[1], angles=phi)
        joints.update(F=F, K=K, G=G, P=offset_point(F, G, v["r12"], v["r11"]))
        links += [("F", "G", v["r9"]), ("K", "G", v["r10"])]
    return joints, links


def loop_residual(joints: Mapping[str, np.ndarray], links: Sequence[Tuple[str, str, float]]) -> np.ndarray:
    """Largest link-length error per sample."""
    errors = [
        np.abs(np.linalg.norm(joints[q] - joints[p], axis=-1) - length)
        for p, q, length in links
    ]
    return np.max(np.stack(errors), axis=0)


def forward_kinematics(
    params: ParamVector, crank_angle: float, branches: Optional[Sequence[int]] = None
) -> Pose:
    """
    Solve the pose at one crank angle.

    The seven-bar is solved in its primary mode with the assembly flags
    chosen by the coupling solve; passing ``branches`` for it is an error.

    Raises:
        LoopDefect: With the offending crank angle attached
        ValueError: On a flag count mismatch or seven-bar flags
    """
    if params.topology is Topology.RTCLM:
        _no_seven_bar_branches(branches)
        from src.rtclm import ModeTag, coupling_solve, mode_kinematics

        return mode_kinematics(coupling_solve(params), ModeTag.PRIMARY, crank_angle)

    flags = _resolve_branches(params.topology, branches)
    joints, links = solve_chain(params, np.array([crank_angle]), flags)
    residual = float(loop_residual(joints, links)[0])
    row = {name: pts[0] for name, pts in joints.items()}
    return Pose(
        crank_angle=float(crank_angle),
        joints=row,
        foot=row["P"],
        branch_flags=flags,
        residual=residual,
    )


def check_branch_continuity(
    points: np.ndarray, scale: float, factor: float = DEFAULT_JUMP_FACTOR, closed: bool = True
) -> None:
    """
    Raise if consecutive points jump further than ``factor * scale``.

    Raises:
        BranchDiscontinuity: With the index of the sample after the jump
    """
    pts = np.asarray(points, dtype=float)
    nxt = np.roll(pts, -1, axis=0) if closed else pts[1:]
    cur = pts if closed else pts[:-1]
    steps = np.linalg.norm(nxt - cur, axis=1)
    limit = factor * scale
    over = np.nonzero(steps > limit)[0]
    if over.size:
        idx = int((over[0] + 1) % len(pts))
        raise BranchDiscontinuity(
            f"Foot jumped {steps[over[0]]:.4g} mm (limit {limit:.4g}) at sample {idx}",
            index=idx,
        )


def crank_angles(n: int, direction: int = 1) -> np.ndarray:
    """n uniformly spaced crank angles over one revolution."""
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    return direction * 2.0 * np.pi * np.arange(n) / n


def trace_bt(
    params: ParamVector,
    n: int,
    period: float = DEFAULT_PERIOD,
    branches: Optional[Sequence[int]] = None,
    direction: int = 1,
    jump_factor: float = DEFAULT_JUMP_FACTOR,
) -> Trajectory:
    """
    Trace the bench trajectory of the foot over one crank revolution.

    Args:
        params: Mechanism parameters
        n: Number of uniformly spaced crank samples (>= 64)
        period: Crank period T in seconds
        branches: One +1/-1 flag per dyad, held fixed over the sweep
        direction: +1 counter-clockwise crank, -1 clockwise
        jump_factor: Branch jump threshold as a fraction of mechanism scale

    Returns:
        Closed Trajectory of foot points

    Raises:
        LoopDefect: If a dyad fails at some crank angle
        BranchDiscontinuity: If the foot jumps between assembly branches
    """
    if n < MIN_TRACE_SAMPLES:
        raise ValueError(f"Trace needs n >= {MIN_TRACE_SAMPLES}, got {n}")

    if params.topology is Topology.RTCLM:
        _no_seven_bar_branches(branches)
        from src.rtclm import ModeTag, coupling_solve, trace_mode

        return trace_mode(
            coupling_solve(params), ModeTag.PRIMARY, n, period=period, direction=direction
        )

    phi = crank_angles(n, direction)
    joints, _ = solve_chain(params, phi, branches)
    foot = joints["P"]
    check_branch_continuity(foot, params.scale, jump_factor)
    logger.debug(f"trace_bt: topology={params.topology.value}, n={n}, direction={direction}")
    return Trajectory(points=foot, period=period)


def check_crank_defect(
    params: ParamVector,
    n_sweep: int = 3600,
    branches: Optional[Sequence[int]] = None,
    jump_factor: float = DEFAULT_JUMP_FACTOR,
) -> DefectReport:
    """
    Audit a mechanism for crank, loop and branch defects.

    The crank test applies the Grashof-type inequality to every crank-driven
    loop; the loop and branch tests sweep ``n_sweep`` crank angles.
    """
    if params.topology is Topology.RTCLM:
        _no_seven_bar_branches(branches)
        from src.rtclm import rtclm_defect_report

        return rtclm_defect_report(params, n_sweep=n_sweep, jump_factor=jump_factor)

    v = params.as_dict()
    margins = [crank_condition(v["r1"], v["r2"], v["r3"], v["r4"])]
    has_crank = any(lhs >= rhs for lhs, rhs in margins)

    has_loop = False
    has_branch = False
    failing: Optional[float] = None
    try:
        joints, _ = solve_chain(params, crank_angles(n_sweep), branches)
        check_branch_continuity(joints["P"], params.scale, jump_factor)
    except LoopDefect as e:
        has_loop = True
        failing = e.angle
    except BranchDiscontinuity:
        has_branch = True

    report = DefectReport(
        has_crank_defect=has_crank,
        has_loop_defect=has_loop,
        has_branch_defect=has_branch,
        first_failing_angle=failing,
        crank_margins=margins,
    )
    logger.debug(f"check_crank_defect: topology={params.topology.value}, ok={report.ok}")
    return report


_SIX_BAR_LOWER = np.array(
    [-np.pi, -np.pi, -500.0, -500.0]
    + [30.0, 30.0, 30.0, 30.0, 30.0, -500.0, 30.0, -500.0, 30.0, 30.0, -500.0, 30.0]
)
_SIX_BAR_UPPER = np.array([np.pi, np.pi, 500.0, 500.0] + [500.0] * 12)

_FOUR_BAR_LOWER = np.array([-np.pi, -np.pi, -500.0, -500.0, 30.0, 30.0, 30.0, 30.0, -500.0, -500.0])
_FOUR_BAR_UPPER = np.array([np.pi, np.pi, 500.0, 500.0] + [500.0] * 6)

# r1..r6, x_d, y_d, a1, b1, a3, b3, dx_eh
_RTCLM_LOWER = np.array([30, 50, 50, 50, 50, 20, -150, -150, 50, 50, 50, 50, 100], dtype=float)
_RTCLM_UPPER = np.array([100, 250, 250, 250, 250, 100, 150, 150, 350, 350, 300, 300, 300], dtype=float)


def default_bounds(topology: Topology) -> Tuple[np.ndarray, np.ndarray]:
    """Full search box (lower, upper) for a topology."""
    topology = Topology(topology)
    if topology is Topology.FOUR_BAR:
        return _FOUR_BAR_LOWER.copy(), _FOUR_BAR_UPPER.copy()
    if topology is Topology.RTCLM:
        return _RTCLM_LOWER.copy(), _RTCLM_UPPER.copy()
    return _SIX_BAR_LOWER.copy(), _SIX_BAR_UPPER.copy()
