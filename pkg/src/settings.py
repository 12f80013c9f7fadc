"""Settings configuration for the CLM design toolkit."""

from pathlib import Path

from dotenv import load_dotenv
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

# Load environment variables from .env file
load_dotenv()


class Settings(BaseSettings):
    """Toolkit settings with environment variable support (prefix CLM_)."""

    model_config = SettingsConfigDict(
        env_prefix="CLM_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Data locations
    fixtures: Path = Field(
        default=Path("fixtures"),
        description="Directory holding mechanism fixture files (CLM_FIXTURES)",
    )

    # Kinematics
    geometry_tolerance: float = Field(
        default=1e-9, description="Loop-closure and coupling residual tolerance (mm)"
    )
    period: float = Field(default=2.0, description="Crank period T (s)")
    optimization_samples: int = Field(
        default=360, description="Crank samples per trace inside optimization loops"
    )
    report_samples: int = Field(
        default=3600, description="Crank samples per trace for final reports"
    )
    mse_samples: int = Field(
        default=360, description="Resampling count used for MSE pairing"
    )
    branch_jump_factor: float = Field(
        default=0.2,
        description="Branch jump threshold as a fraction of mechanism scale",
    )

    # Metrics
    fourier_harmonics: int = Field(
        default=7, description="Harmonics kept by the Fourier shape distance"
    )

    # Optimization
    penalty_value: float = Field(
        default=1e10, description="Objective penalty for kinematic failures"
    )
    sbx_eta: float = Field(default=15.0, description="SBX distribution index")
    mutation_eta: float = Field(
        default=20.0, description="Polynomial mutation distribution index"
    )
    jobs: int = Field(default=1, description="Parallel evaluation workers")

    # Logging
    log_level: str = Field(default="INFO", description="Root log level")


def load_settings() -> Settings:
    """Load settings with proper error handling."""
    try:
        return Settings()
    except Exception as e:
        error_msg = f"Failed to load settings: {e}"
        if "fixtures" in str(e).lower():
            error_msg += "\nCheck CLM_FIXTURES in your .env file"
        raise ValueError(error_msg) from e
