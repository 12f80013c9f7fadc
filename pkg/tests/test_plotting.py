import os
import sys

import numpy as np
import pytest

# Add project root to path
sys.path.append(os.getcwd())

from src.errors import EmptyArchive
from src.kinematics.trajectory import bt_to_wt, find_feature_points
from src.plotting import plot_archive, plot_trajectories


def test_plot_trajectories_is_reproducible(tmp_path, cycloid_target):
    """Test the same curves give byte-identical SVGs."""
    wt = bt_to_wt(cycloid_target, find_feature_points(cycloid_target))
    curves = {"target": cycloid_target, "wt": wt}
    a = plot_trajectories(curves, tmp_path / "a.svg")
    b = plot_trajectories(curves, tmp_path / "b.svg")
    assert a.read_bytes() == b.read_bytes()
    assert b"<svg" in a.read_bytes()


def test_plot_trajectories_needs_curves(tmp_path):
    """Test an empty overlay is rejected."""
    with pytest.raises(ValueError):
        plot_trajectories({}, tmp_path / "empty.svg")


def test_plot_archive(tmp_path):
    """Test an archive scatter with a highlighted knee."""
    objectives = np.array([[1.0, 4.0], [2.0, 2.0], [4.0, 1.0]])
    path = plot_archive(objectives, tmp_path / "front.svg", knee=(2.0, 2.0))
    assert path.exists()
    with pytest.raises(EmptyArchive):
        plot_archive(np.zeros((0, 2)), tmp_path / "none.svg")
