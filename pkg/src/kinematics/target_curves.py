"""Compound-cycloid reference trajectory."""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.errors import OutOfRange
from src.kinematics.trajectory import Trajectory

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CycloidSpec:
    """Step length L (mm), step height H (mm) and period T (s)."""

    L: float = 300.0
    H: float = 100.0
    T: float = 2.0

    def __post_init__(self):
        """Validate positive dimensions."""
        for name in ("L", "H", "T"):
            if getattr(self, name) <= 0:
                raise ValueError(f"CycloidSpec.{name} must be positive")


def cycloid_point(spec: CycloidSpec, t: float) -> Tuple[float, float]:
    """
    Evaluate the compound cycloid at time t.

        x(t) = L (t/T - sin(2 pi t / T) / (2 pi))
        y(t) = (H / 2) (cos(2 pi t / T) - 1)

    y is negative during the swing and reaches -H at t = T/2.

    Raises:
        OutOfRange: If t lies outside [0, T]
    """
    if not 0.0 <= t <= spec.T:
        raise OutOfRange(f"t={t} outside [0, {spec.T}]")
    x, y = _cycloid(spec, np.asarray(t, dtype=float))
    return float(x), float(y)


def cycloid_velocity(spec: CycloidSpec, t: float) -> Tuple[float, float]:
    """Analytic time derivative of the compound cycloid."""
    if not 0.0 <= t <= spec.T:
        raise OutOfRange(f"t={t} outside [0, {spec.T}]")
    w = 2.0 * np.pi / spec.T
    vx = spec.L / spec.T * (1.0 - np.cos(w * t))
    vy = -spec.H * np.pi / spec.T * np.sin(w * t)
    return float(vx), float(vy)


def _cycloid(spec: CycloidSpec, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    w = 2.0 * np.pi / spec.T
    x = spec.L * (t / spec.T - np.sin(w * t) / (2.0 * np.pi))
    y = 0.5 * spec.H * (np.cos(w * t) - 1.0)
    return x, y


def cycloid_bt_target(spec: CycloidSpec, n: int = 360, flip: bool = False) -> Trajectory:
    """
    Closed bench-trajectory target built from the compound cycloid.

    Samples 0..n/2-1 are the straight stance from landing (0, 0) toward
    (L, 0) at constant speed; samples n/2..n-1 are the swing from take-off
    (L, 0) back toward the landing point along the cycloid.

    Args:
        spec: Cycloid dimensions
        n: Even sample count
        flip: Mirror y so the swing lies above the stance line

    Returns:
        Closed Trajectory with period ``spec.T``
    """
    if n % 2:
        raise ValueError("Target sample count must be even")
    half = n // 2
    k = np.arange(half)

    stance = np.column_stack([spec.L * k / half, np.zeros(half)])
    # Swing runs the cycloid backwards in x: x(T - tau) = L - x(tau)
    tau = spec.T * k / half
    sx, sy = _cycloid(spec, tau)
    swing = np.column_stack([spec.L - sx, sy])

    target = Trajectory(points=np.vstack([stance, swing]), period=spec.T)
    logger.debug(f"cycloid_bt_target: L={spec.L}, H={spec.H}, n={n}, flip={flip}")
    return target.flipped_y() if flip else target
