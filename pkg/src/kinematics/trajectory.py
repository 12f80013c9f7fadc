"""
Bench and walking trajectories, feature points and multi-leg layout.

A bench trajectory (BT) is the closed foot curve traced with the trunk held
fixed. Under no-slip contact, two BTs half a period apart compose into the
open walking trajectory (WT) of one swing. Feature detection, the BT to WT
conversion and the relative placement of several legs' WTs all live here.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.errors import NoValidPair

logger = logging.getLogger(__name__)

MIN_CLOSED_SAMPLES = 64

# Trot: diagonal pairs share phase
LEG_IDS = ("A", "B", "C", "D")
TROT_PHASES = {"A": 0.0, "B": 0.5, "C": 0.0, "D": 0.5}


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Uniformly sampled planar curve with period T."""

    points: np.ndarray
    period: float
    phase_origin: int = 0
    closed: bool = True

    def __post_init__(self):
        """Validate shape and sample count."""
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("Trajectory points must have shape (N, 2)")
        if self.closed and len(pts) < MIN_CLOSED_SAMPLES:
            raise ValueError(
                f"Closed trajectory needs at least {MIN_CLOSED_SAMPLES} samples"
            )
        if not self.closed and len(pts) < 2:
            raise ValueError("Open trajectory needs at least 2 samples")
        if self.period <= 0:
            raise ValueError("Trajectory period must be positive")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def x(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.points[:, 1]

    @property
    def dt(self) -> float:
        """Time between consecutive samples."""
        if self.closed:
            return self.period / self.n
        # Open WTs span half a period over n - 1 intervals
        return 0.5 * self.period / (self.n - 1)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n) * self.dt

    def translated(self, dx: float, dy: float) -> "Trajectory":
        return replace(self, points=self.points + np.array([dx, dy]))

    def scaled(self, factor: float, about: Sequence[float] = (0.0, 0.0)) -> "Trajectory":
        origin = np.asarray(about, dtype=float)
        return replace(self, points=origin + factor * (self.points - origin))

    def flipped_y(self) -> "Trajectory":
        """Reflect in the x axis (y -> -y)."""
        return replace(self, points=self.points * np.array([1.0, -1.0]))

    def rolled(self, shift: int) -> "Trajectory":
        """Move the start index forward by ``shift`` samples (closed only)."""
        if not self.closed:
            raise ValueError("Only closed trajectories can be rolled")
        return replace(self, points=np.roll(self.points, -shift, axis=0))

    def resampled(self, n: int) -> "Trajectory":
        """Linear re-interpolation onto ``n`` uniform samples."""
        if self.closed:
            s_old = np.arange(self.n) / self.n
            s_new = np.arange(n) / n
            x = np.interp(s_new, s_old, self.x, period=1.0)
            y = np.interp(s_new, s_old, self.y, period=1.0)
        else:
            s_old = np.linspace(0.0, 1.0, self.n)
            s_new = np.linspace(0.0, 1.0, n)
            x = np.interp(s_new, s_old, self.x)
            y = np.interp(s_new, s_old, self.y)
        return replace(self, points=np.column_stack([x, y]), phase_origin=0)


@dataclass(frozen=True)
class FeaturePoints:
    """Sample indices of the eight BT features.

    t1 landing, t2 take-off, t3 lowest, t4 left-most, t5 right-most,
    t6 local lowest, t7 / t8 the two highest swing points. Absent local
    features are None.
    """

    t1: int
    t2: int
    t3: int
    t4: int
    t5: int
    t6: Optional[int]
    t7: Optional[int]
    t8: Optional[int]
    n: int

    def as_dict(self) -> Dict[str, Optional[int]]:
        return {f"t{i}": getattr(self, f"t{i}") for i in range(1, 9)}

    def points(self, bt: Trajectory) -> Dict[str, Optional[Tuple[float, float]]]:
        """Coordinates of each present feature."""
        out: Dict[str, Optional[Tuple[float, float]]] = {}
        for key, idx in self.as_dict().items():
            out[key] = None if idx is None else tuple(bt.points[idx])
        return out

    def stance_indices(self) -> np.ndarray:
        """Indices from landing forward to take-off, inclusive."""
        length = (self.t2 - self.t1) % self.n
        return (self.t1 + np.arange(length + 1)) % self.n

    def swing_indices(self) -> np.ndarray:
        """Indices from take-off forward to landing, inclusive."""
        length = (self.t1 - self.t2) % self.n
        return (self.t2 + np.arange(length + 1)) % self.n


@dataclass(frozen=True)
class LegLayout:
    """Frame origins and phase offsets of the legs of one module."""

    origins: Dict[str, Tuple[float, float]]
    phases: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        """Validate leg ids and fill default phases."""
        unknown = set(self.origins) - set(LEG_IDS)
        if unknown:
            raise ValueError(f"Unknown leg ids: {sorted(unknown)}")
        if len(self.origins) not in (2, 4):
            raise ValueError("Layouts hold two (biped) or four (trot) legs")
        phases = dict(self.phases)
        for leg in self.origins:
            phases.setdefault(leg, TROT_PHASES[leg])
        for leg, phase in phases.items():
            if phase not in (0.0, 0.5):
                raise ValueError(f"Leg {leg} phase must be 0 or 1/2, got {phase}")
        if len(self.origins) == 4:
            if phases["A"] != phases["C"] or phases["B"] != phases["D"]:
                raise ValueError("Trot requires A/C and B/D to share phase")
        object.__setattr__(self, "phases", phases)

    @property
    def legs(self) -> List[str]:
        return [leg for leg in LEG_IDS if leg in self.origins]

    @property
    def gait(self) -> str:
        return "biped" if len(self.origins) == 2 else "quad"

    @classmethod
    def biped(cls, spacing: float = 0.0) -> "LegLayout":
        return cls(origins={"A": (0.0, 0.0), "B": (spacing, 0.0)})

    @classmethod
    def trot(cls, length: float) -> "LegLayout":
        """
        Quadruped with front legs A, B and rear legs C, D ``length`` mm behind.

        Diagonal pairs share phase: A and C lead, B and D trail by T/2.
        """
        if length <= 0:
            raise ValueError("Trot body length must be positive")
        return cls(
            origins={
                "A": (0.0, 0.0),
                "B": (0.0, 0.0),
                "C": (-length, 0.0),
                "D": (-length, 0.0),
            }
        )


@dataclass(frozen=True, eq=False)
class PositionedWT:
    """One leg's WT placed in the module frame."""

    leg: str
    wt: Trajectory
    phase: float


@dataclass(frozen=True)
class LayoutResult:
    """Positioned WTs plus the foot x-differences between successive legs."""

    wts: List[PositionedWT]
    dx: Dict[str, float]


def _central_velocity(points: np.ndarray, closed: bool) -> np.ndarray:
    """Central differences on a uniform grid (one-sided at open ends)."""
    if closed:
        return 0.5 * (np.roll(points, -1, axis=0) - np.roll(points, 1, axis=0))
    return np.gradient(points, axis=0)


def find_feature_points(bt: Trajectory, tol: float = 1e-6) -> FeaturePoints:
    """
    Locate the eight feature points of a closed BT.

    Landing and take-off are the index pair half a cycle apart with the
    closest y values and the landing left of the take-off.

    Args:
        bt: Closed bench trajectory with an even sample count
        tol: Equal-y tolerance as a fraction of the bounding-box height

    Returns:
        FeaturePoints

    Raises:
        NoValidPair: If no half-cycle pair has the landing left of the take-off
    """
    if not bt.closed:
        raise ValueError("Feature points need a closed trajectory")
    n = bt.n
    if n % 2:
        raise ValueError("Feature points need an even sample count")
    half = n // 2
    x, y = bt.x, bt.y

    idx = np.arange(n)
    partner = (idx + half) % n
    ordered = x[idx] < x[partner]
    if not ordered.any():
        raise NoValidPair("No half-cycle pair with x(t1) < x(t2)")

    gap = np.abs(y[idx] - y[partner])
    height = float(np.ptp(y)) or 1.0
    # Differences below the tolerance are treated as exact ties
    gap = np.where(gap <= tol * height, 0.0, gap)
    gap = np.where(ordered, gap, np.inf)
    t1 = int(np.argmin(gap))
    t2 = int(partner[t1])

    t3 = int(np.argmin(y))
    t4 = int(np.argmin(x))
    t5 = int(np.argmax(x))

    # Local extrema of y along the swing from vertical velocity sign changes
    vy = _central_velocity(bt.points, closed=True)[:, 1]
    swing = (t2 + np.arange(1, half)) % n
    minima: List[int] = []
    maxima: List[int] = []
    for i in swing:
        before, after = vy[(i - 1) % n], vy[i]
        if before < 0 <= after:
            minima.append(int(i))
        elif before > 0 >= after:
            maxima.append(int(i))

    t6 = min(minima, key=lambda i: (y[i], i)) if minima else None
    ranked = sorted(maxima, key=lambda i: (-y[i], i))
    t7 = ranked[0] if ranked else None
    t8 = ranked[1] if len(ranked) > 1 else None

    return FeaturePoints(
        t1=t1, t2=t2, t3=t3, t4=t4, t5=t5, t6=t6, t7=t7, t8=t8, n=n
    )


def bt_to_wt(bt: Trajectory, fp: FeaturePoints) -> Trajectory:
    """
    Compose the swing WT of one leg from its BT.

    With the take-off of leg A as time origin, leg B (half a period behind)
    stands on the ground, so over 0 <= dt <= T/2

        C_m(t2 + dt) = C_b(t2 + dt) - C_b(t1 + dt) + C_b(t1)

    The first WT sample coincides with C_b(t2), the last with
    2 C_b(t1) - C_b(t2), so the horizontal step is twice the stance length.

    Args:
        bt: Closed bench trajectory
        fp: Feature points of ``bt``

    Returns:
        Open WT with N/2 + 1 samples and phase origin at take-off
    """
    n = bt.n
    half = n // 2
    k = np.arange(half + 1)
    pts = bt.points
    wt = pts[(fp.t2 + k) % n] - pts[(fp.t1 + k) % n] + pts[fp.t1]
    logger.debug(f"bt_to_wt: n={n}, t1={fp.t1}, t2={fp.t2}")
    return Trajectory(points=wt, period=bt.period, phase_origin=0, closed=False)


def step_length(wt: Trajectory) -> float:
    """Horizontal distance between take-off and landing of a WT."""
    return float(abs(wt.x[-1] - wt.x[0]))


def multi_wt_layout(
    bt: Trajectory, fp: FeaturePoints, layout: LegLayout
) -> LayoutResult:
    """
    Place every leg's WT in the module frame.

    The foot x-differences follow from the take-off / landing identities
    (A and C take off at C_b(t2), B and D land at 2 C_b(t1)) plus the frame
    offsets between legs. A leg half a period out of phase is standing on
    C_b(t1) at the reference instant, so its WT is shifted by
    C_b(t1) - C_b(t2) as well as by its frame origin.

    Args:
        bt: Closed bench trajectory shared by all legs
        fp: Feature points of ``bt``
        layout: Leg origins and phases

    Returns:
        LayoutResult with the positioned WTs (leg order A..D) and the
        x-differences keyed "A,B", "B,C", "C,D"
    """
    wt = bt_to_wt(bt, fp)
    takeoff = bt.points[fp.t2]
    landing = 2.0 * bt.points[fp.t1]
    shift = bt.points[fp.t1] - bt.points[fp.t2]

    positioned: List[PositionedWT] = []
    for leg in layout.legs:
        origin = np.asarray(layout.origins[leg], dtype=float)
        phase = layout.phases[leg]
        offset = origin + (shift if phase == 0.5 else 0.0)
        positioned.append(
            PositionedWT(leg=leg, wt=wt.translated(*offset), phase=phase)
        )

    def origin_x(leg: str) -> float:
        return float(layout.origins[leg][0])

    dx: Dict[str, float] = {}
    legs = layout.legs
    if "B" in legs:
        dx["A,B"] = float(landing[0] + origin_x("B") - origin_x("A") - takeoff[0])
    if "C" in legs:
        dx["B,C"] = float(takeoff[0] + origin_x("C") - origin_x("B") - landing[0])
    if "D" in legs:
        dx["C,D"] = float(landing[0] + origin_x("D") - origin_x("C") - takeoff[0])

    logger.debug(f"multi_wt_layout: gait={layout.gait}, dx={dx}")
    return LayoutResult(wts=positioned, dx=dx)
