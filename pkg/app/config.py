"""
Configuration settings for the toolkit
"""

import os
from pathlib import Path

from dotenv import load_dotenv
from pydantic_settings import BaseSettings, SettingsConfigDict

load_dotenv()


class Settings(BaseSettings):
    """Toolkit settings"""

    # Output Configuration
    output_dir: Path = Path(os.getenv("KSE_OUTPUT_DIR", "output"))

    # Solver Configuration
    sdp_solver: str = os.getenv("KSE_SDP_SOLVER", "CLARABEL")
    lmi_eps: float = float(os.getenv("KSE_LMI_EPS", "1e-6"))
    verify_tol: float = float(os.getenv("KSE_VERIFY_TOL", "1e-8"))
    variable_bound: float = float(os.getenv("KSE_VARIABLE_BOUND", "1e4"))

    # Application Configuration
    app_name: str = "kse-sampled-control"
    app_version: str = "1.0.0"
    debug: bool = os.getenv("KSE_DEBUG", "False").lower() == "true"
    log_level: str = os.getenv("KSE_LOG_LEVEL", "INFO")

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="KSE_",
        case_sensitive=False,
        extra="ignore",
    )


settings = Settings()

# Validate settings
if settings.lmi_eps <= 0:
    raise ValueError("KSE_LMI_EPS must be positive")
if settings.verify_tol < 0:
    raise ValueError("KSE_VERIFY_TOL must be nonnegative")
