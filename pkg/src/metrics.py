"""
Walking performance measures computed from bench and walking trajectories.

Stance fluctuation and straightness, landing impact, crossing heights,
obstacle-crossing probability, point-wise trajectory error and Fourier
shape distance.
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid

from src.errors import InsufficientClearance, LengthMismatch, ZeroStanceLength
from src.kinematics.trajectory import (
    FeaturePoints,
    LegLayout,
    PositionedWT,
    Trajectory,
    bt_to_wt,
    find_feature_points,
    multi_wt_layout,
    step_length,
)
from src.models import PerformanceReport

logger = logging.getLogger(__name__)

MIN_STANCE_LENGTH = 1e-9
# Rear legs of the default trot sit a quarter stride behind the front legs
QUARTER_STRIDE = 0.25


def stance_metrics(bt: Trajectory, fp: FeaturePoints) -> Tuple[float, float, float]:
    """
    Stance fluctuation h_s, stance length l_s and straightness S.

    h_s = y(t1) - min y over the stance arc, l_s = |x(t2) - x(t1)|,
    S = 100 h_s / l_s.

    Raises:
        ZeroStanceLength: If l_s is below 1e-9 mm
    """
    stance = bt.points[fp.stance_indices()]
    h_s = float(bt.y[fp.t1] - stance[:, 1].min())
    l_s = float(abs(bt.x[fp.t2] - bt.x[fp.t1]))
    if l_s < MIN_STANCE_LENGTH:
        raise ZeroStanceLength(f"Stance length {l_s} mm is zero")
    return h_s, l_s, 100.0 * h_s / l_s


def straightness(h_s: float, l_s: float) -> float:
    """S in percent."""
    if l_s < MIN_STANCE_LENGTH:
        raise ZeroStanceLength(f"Stance length {l_s} mm is zero")
    return 100.0 * h_s / l_s


def _contact_angle(bt: Trajectory, index: int) -> float:
    n = bt.n
    delta = bt.points[(index + 1) % n] - bt.points[(index - 1) % n]
    if delta[0] == 0.0:
        return 90.0
    return float(np.degrees(np.arctan(abs(delta[1] / delta[0]))))


def impact(bt: Trajectory, fp: FeaturePoints) -> Tuple[float, float, float]:
    """
    Landing impact speed and the landing / take-off angles.

    Both use central differences on the uniform grid. The impact is the
    vertical component of the landing velocity, I = |v(t1)| sin(theta1).

    Returns:
        (I in mm/s, theta1 in deg, theta2 in deg)
    """
    n = bt.n
    dt = bt.dt
    velocity = (bt.points[(fp.t1 + 1) % n] - bt.points[(fp.t1 - 1) % n]) / (2.0 * dt)
    theta1 = _contact_angle(bt, fp.t1)
    theta2 = _contact_angle(bt, fp.t2)
    speed = float(np.linalg.norm(velocity))
    return speed * float(np.sin(np.radians(theta1))), theta1, theta2


def swing_heights(wt: Trajectory) -> np.ndarray:
    """
    Heights of a WT above its take-off point, signed toward the swing side.

    A WT whose swing lies below the ground line (the unflipped cycloid
    convention) is measured downward.
    """
    rel = wt.y - wt.y[0]
    if abs(rel.min()) > abs(rel.max()):
        rel = -rel
    return rel


def crossing_stats(wt: Trajectory) -> Tuple[float, float]:
    """
    Maximum and mean crossing heights of a swing WT.

    Both are measured from the lowest swing point: h_m = max height minus
    the lowest height, h_bar = (2/T) * integral of height over the swing
    minus the lowest height, by the trapezoidal rule. So h_m >= h_bar >= 0.
    """
    heights = swing_heights(wt)
    floor = float(heights.min())
    h_m = float(heights.max()) - floor
    duration = wt.times[-1] - wt.times[0]
    if duration <= 0:
        return h_m, 0.0
    mean = trapezoid(heights, wt.times) / duration
    return h_m, float(mean - floor)


def _crossings(wt: Trajectory, b: float) -> Optional[Tuple[float, float]]:
    """x positions where the swing first rises above and last falls below b."""
    heights = swing_heights(wt)
    above = np.nonzero(heights > b)[0]
    if above.size == 0:
        return None
    x = wt.x

    def interpolate(i_low: int, i_high: int) -> float:
        h0, h1 = heights[i_low], heights[i_high]
        frac = (b - h0) / (h1 - h0)
        return float(x[i_low] + frac * (x[i_high] - x[i_low]))

    first, last = int(above[0]), int(above[-1])
    rise = float(x[0]) if first == 0 else interpolate(first - 1, first)
    fall = float(x[-1]) if last == len(x) - 1 else interpolate(last + 1, last)
    return rise, fall


def _chords(wts: Sequence[PositionedWT], b: float) -> List[Tuple[float, float]]:
    chords: List[Tuple[float, float]] = []
    for pw in wts:
        crossing = _crossings(pw.wt, b)
        if crossing is None:
            raise InsufficientClearance(f"Leg {pw.leg} never rises above b={b}")
        chords.append((min(crossing), max(crossing)))
    return chords


def ordered_crossings(wts: Sequence[PositionedWT], b: float, count: int = 8) -> np.ndarray:
    """
    First ``count`` points B1, B2, ... where the WTs cross height b, by x.

    Every leg repeats its WT once per stride, so the chain of swing arcs
    is periodic. B1 is the first point, at or after the earliest crossing
    of the given WTs, where a swing rises above b; the points then
    alternate between the ends of above-b segments and the foothold zones
    between them.

    Raises:
        InsufficientClearance: If some WT never rises above b
    """
    stride = step_length(wts[0].wt)
    chords = _chords(wts, b)

    origin = min(lo for lo, _ in chords)
    points = sorted(
        (end + k * stride, kind)
        for k in range(-1, count + 1)
        for lo, hi in chords
        for end, kind in ((lo, 0), (hi, 1))
    )
    start = next(i for i, (x, kind) in enumerate(points) if kind == 0 and x >= origin - 1e-9)
    return np.array([x for x, _ in points[start : start + count]])


def _clear_at(chords: Sequence[Tuple[float, float]], x: float, stride: float) -> bool:
    """Whether x lies inside some stride copy of every chord."""
    for lo, hi in chords:
        k = np.floor((x - lo) / stride)
        if not lo + k * stride < x < hi + k * stride:
            return False
    return True


def crossing_probability(
    wts: Sequence[PositionedWT], a: float, b: float, gait: str = "biped", strict: bool = False
) -> float:
    """
    Probability (%) of crossing an obstacle of length a and height b.

    With B1..B8 from ordered_crossings and l the WT step length:

        biped (brick):  psi2 = (l - B4B5 - B6B7 - 4a) / l   over legs A, B
        quad (step):    psi4 = (B1B2 + B3B4 + B5B6 + B7B8 - 4a) / l   over A..D

    clamped to [0, 1] and expressed in percent. Segments B1B2, B3B4, ...
    must be clear of every leg; when the foothold zones overlap there is
    no such window and psi is 0.

    Args:
        wts: Positioned WTs from multi_wt_layout, leg order A..D
        a: Obstacle length (mm)
        b: Obstacle height (mm)
        gait: "biped" or "quad"
        strict: Raise instead of returning 0 when some leg never clears b

    Raises:
        InsufficientClearance: Only when ``strict`` is set
    """
    if a < 0 or b < 0:
        raise ValueError("Obstacle dimensions must be non-negative")
    if gait not in ("biped", "quad"):
        raise ValueError(f"Unknown gait {gait!r}")
    legs = list(wts)[:2] if gait == "biped" else list(wts)
    if len(legs) < 2 or (gait == "quad" and len(legs) != 4):
        raise ValueError(f"The {gait} crossing probability needs {2 if gait == 'biped' else 4} positioned WTs")

    stride = step_length(legs[0].wt)
    if stride <= 0:
        return 0.0
    try:
        p = ordered_crossings(legs, b)
    except InsufficientClearance as e:
        if strict:
            raise
        logger.warning(f"crossing_probability: {e}; psi=0")
        return 0.0

    chords = _chords(legs, b)
    clear = [_clear_at(chords, 0.5 * (p[k] + p[k + 1]), stride) for k in (0, 2, 4, 6)]
    if not all(clear):
        logger.debug("crossing_probability: foothold zones overlap, no clear window; psi=0")
        return 0.0
    if gait == "biped":
        psi = (stride - (p[4] - p[3]) - (p[6] - p[5]) - 4.0 * a) / stride
    else:
        psi = ((p[1] - p[0]) + (p[3] - p[2]) + (p[5] - p[4]) + (p[7] - p[6]) - 4.0 * a) / stride
    if psi < 0.0 or psi > 1.0:
        logger.debug(f"crossing_probability: clamped psi={psi:.4f}")
    return 100.0 * float(np.clip(psi, 0.0, 1.0))


def _roll_to_takeoff(traj: Trajectory) -> Trajectory:
    fp = find_feature_points(traj)
    return traj.rolled(fp.t2)


def mse(candidate: Trajectory, target: Trajectory) -> float:
    """
    Mean point-wise Euclidean distance between two trajectories.

    Both are rolled so their take-off sample is index 0 before pairing.

    Raises:
        LengthMismatch: If the sample counts differ
    """
    if candidate.n != target.n:
        raise LengthMismatch(f"Sample counts differ: {candidate.n} vs {target.n}")
    a = _roll_to_takeoff(candidate).points
    b = _roll_to_takeoff(target).points
    return float(np.mean(np.linalg.norm(a - b, axis=1)))


def fourier_descriptor(traj: Trajectory, n_harmonics: int = 7) -> np.ndarray:
    """
    Normalized harmonic magnitudes of a closed curve.

    Magnitudes of the DFT of z = x + iy for k = +-1..+-n_harmonics, divided
    by their L2 norm. The DC term is dropped (translation), magnitudes drop
    rotation and start point, the norm drops scale.
    """
    if n_harmonics < 3:
        raise ValueError("n_harmonics must be at least 3")
    if 2 * n_harmonics + 1 > traj.n:
        raise ValueError("Too many harmonics for the sample count")
    z = traj.x + 1j * traj.y
    coeffs = np.fft.fft(z) / traj.n
    k = np.concatenate([np.arange(1, n_harmonics + 1), -np.arange(1, n_harmonics + 1)])
    mags = np.abs(coeffs[k])
    norm = np.linalg.norm(mags)
    if norm == 0.0:
        return mags
    return mags / norm


def fourier_distance(candidate: Trajectory, target: Trajectory, n_harmonics: int = 7) -> float:
    """Euclidean distance between normalized Fourier descriptors."""
    if not (candidate.closed and target.closed):
        raise ValueError("Fourier distance needs closed curves")
    d = fourier_descriptor(candidate, n_harmonics) - fourier_descriptor(target, n_harmonics)
    return float(np.linalg.norm(d))


def performance_report(
    bt: Trajectory,
    wts: Optional[Sequence[PositionedWT]] = None,
    target: Optional[Trajectory] = None,
    obstacle: Tuple[float, float] = (25.0, 25.0),
    mse_samples: int = 360,
    n_harmonics: int = 7,
) -> PerformanceReport:
    """
    Every measure for one bench trajectory.

    Args:
        bt: Closed bench trajectory
        wts: Positioned WTs of a quad trot layout; when omitted the rear
            pair is placed a quarter stride behind the front pair
        target: Optional target BT enabling mse and fourier_distance
        obstacle: (a, b) for the crossing probabilities
        mse_samples: Resampling count for MSE pairing
        n_harmonics: Fourier descriptor harmonics
    """
    fp = find_feature_points(bt)
    h_s, l_s, s = stance_metrics(bt, fp)
    i, theta1, theta2 = impact(bt, fp)
    wt = bt_to_wt(bt, fp)
    h_m, h_bar = crossing_stats(wt)
    if wts is None:
        wts = multi_wt_layout(bt, fp, LegLayout.trot(QUARTER_STRIDE * step_length(wt))).wts
    a, b = obstacle
    psi2 = crossing_probability(wts, a, b, gait="biped")
    psi4 = crossing_probability(wts, a, b, gait="quad")

    mse_value = None
    fd_value = None
    if target is not None:
        mse_value = mse(bt.resampled(mse_samples), target.resampled(mse_samples))
        fd_value = fourier_distance(bt, target, n_harmonics)

    return PerformanceReport(
        h_s=h_s,
        S=s,
        theta1=theta1,
        theta2=theta2,
        I=i,
        h_m=h_m,
        h_bar=h_bar,
        psi2=psi2,
        psi4=psi4,
        mse=mse_value,
        fourier_distance=fd_value,
        l_s=l_s,
        l_w=step_length(wt),
    )
