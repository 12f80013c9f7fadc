import os
import sys
from pathlib import Path

import pytest

# Add project root to path
sys.path.append(os.getcwd())

from src.kinematics.linkage_core import ParamVector, Topology
from src.kinematics.target_curves import CycloidSpec, cycloid_bt_target

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

# Crank-rocker: crank 40, coupler 160, rocker 120, ground 160 along +x
FOUR_BAR = {
    "b": 0.0,
    "g": 0.0,
    "x_a": 0.0,
    "y_a": 0.0,
    "r1": 40.0,
    "r2": 160.0,
    "r3": 120.0,
    "r4": 160.0,
    "r5": 80.0,
    "r6": 40.0,
}


@pytest.fixture
def fixtures_dir() -> Path:
    """Repository fixture directory."""
    return FIXTURES


@pytest.fixture
def four_bar() -> ParamVector:
    """Fully rotatable four-bar with a coupler-point foot."""
    return ParamVector.from_mapping(Topology.FOUR_BAR, FOUR_BAR)


@pytest.fixture
def cycloid_target():
    """Default 360-sample compound-cycloid target."""
    return cycloid_bt_target(CycloidSpec(), 360)
