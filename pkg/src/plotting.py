"""SVG figures of trajectories and Pareto archives."""

import io
import logging
import math
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from src.errors import EmptyArchive  # noqa: E402
from src.kinematics.trajectory import Trajectory, find_feature_points  # noqa: E402
from src.storage import atomic_write_text  # noqa: E402

logger = logging.getLogger(__name__)

# Fixed salt and no date keep SVG output byte-stable across runs
matplotlib.rcParams["svg.hashsalt"] = "clm-designer"
SVG_METADATA = {"Date": None}

FEATURE_MARKERS = {"t1": "v", "t2": "^", "t3": "s", "t4": "<", "t5": ">"}


def _figure(width: float = 6.0, height: Optional[float] = None):
    golden_ratio = (math.sqrt(5) - 1.0) / 2.0
    if not height:
        height = width * golden_ratio
    fig, ax = plt.subplots(figsize=(width, height))
    ax.tick_params(labelsize=9)
    return fig, ax


def _save_svg(fig, path: Path) -> Path:
    buffer = io.StringIO()
    fig.savefig(buffer, format="svg", metadata=SVG_METADATA, bbox_inches="tight")
    plt.close(fig)
    return atomic_write_text(path, buffer.getvalue())


def plot_trajectories(
    curves: Dict[str, Trajectory],
    path: Path,
    title: str = "Bench trajectory",
    mark_features: bool = True,
) -> Path:
    """
    Overlay labelled trajectories with landing / take-off / extreme markers.

    Args:
        curves: Label -> trajectory, drawn in insertion order
        path: Output SVG
        title: Figure title
        mark_features: Draw t1..t5 on closed curves
    """
    if not curves:
        raise ValueError("Nothing to plot")
    fig, ax = _figure()
    for label, traj in curves.items():
        x = np.append(traj.x, traj.x[0]) if traj.closed else traj.x
        y = np.append(traj.y, traj.y[0]) if traj.closed else traj.y
        (line,) = ax.plot(x, y, linewidth=1.2, label=label)
        if mark_features and traj.closed:
            fp = find_feature_points(traj)
            for name, marker in FEATURE_MARKERS.items():
                i = getattr(fp, name)
                ax.plot(traj.x[i], traj.y[i], marker=marker, color=line.get_color(), markersize=5, linestyle="")
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x (mm)")
    ax.set_ylabel("y (mm)")
    ax.set_title(title)
    ax.legend(fontsize=8)
    logger.debug(f"plot_trajectories: curves={list(curves)}, path={path}")
    return _save_svg(fig, Path(path))


def plot_archive(
    objectives: np.ndarray,
    path: Path,
    names: Sequence[str] = ("f1", "f2"),
    knee: Optional[Tuple[float, float]] = None,
    title: str = "Pareto archive",
) -> Path:
    """
    Scatter the first two objectives of an archive, highlighting the knee.

    Raises:
        EmptyArchive: If there is nothing to draw
    """
    F = np.asarray(objectives, dtype=float)
    if F.size == 0:
        raise EmptyArchive("empty archive")
    F = F.reshape(len(F), -1)
    fig, ax = _figure()
    second = F[:, 1] if F.shape[1] > 1 else np.zeros(len(F))
    ax.scatter(F[:, 0], second, s=14, label="archive")
    if knee is not None:
        ax.scatter([knee[0]], [knee[1]], s=60, marker="*", color="tab:red", label="knee")
    ax.set_xlabel(names[0])
    ax.set_ylabel(names[1] if len(names) > 1 else "")
    ax.set_title(title)
    ax.legend(fontsize=8)
    return _save_svg(fig, Path(path))
