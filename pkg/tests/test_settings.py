import os
import sys
from pathlib import Path

import pytest

# Add project root to path
sys.path.append(os.getcwd())

from src.settings import Settings, load_settings


def test_defaults(monkeypatch):
    """Test the documented defaults when nothing is set."""
    for name in ("CLM_PERIOD", "CLM_REPORT_SAMPLES", "CLM_FIXTURES"):
        monkeypatch.delenv(name, raising=False)
    settings = Settings(_env_file=None)
    assert settings.period == 2.0
    assert settings.report_samples == 3600
    assert settings.fixtures == Path("fixtures")
    assert settings.fourier_harmonics == 7


def test_environment_override(monkeypatch):
    """Test CLM_ variables override defaults."""
    monkeypatch.setenv("CLM_PERIOD", "3.5")
    monkeypatch.setenv("CLM_JOBS", "4")
    settings = load_settings()
    assert settings.period == 3.5
    assert settings.jobs == 4


def test_invalid_value(monkeypatch):
    """Test a non-numeric value is reported as a settings error."""
    monkeypatch.setenv("CLM_PERIOD", "fast")
    with pytest.raises(ValueError, match="Failed to load settings"):
        load_settings()


def test_validate_config_passes(monkeypatch, capsys):
    """Test the validation script accepts the default settings."""
    from src.test_config import validate_config

    monkeypatch.setenv("CLM_FIXTURES", str(Path(__file__).resolve().parent.parent / "fixtures"))
    monkeypatch.setenv("CLM_REPORT_SAMPLES", "360")
    assert validate_config() is True
    assert "ALL CONFIGURATION CHECKS PASSED" in capsys.readouterr().out


def test_validate_config_rejects_odd_samples(monkeypatch, capsys):
    """Test odd MSE sample counts fail validation."""
    from src.test_config import validate_config

    monkeypatch.setenv("CLM_MSE_SAMPLES", "361")
    assert validate_config() is False
    assert "CONFIGURATION VALIDATION FAILED" in capsys.readouterr().out
