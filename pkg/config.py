"""
Application Configuration Module

Uses Pydantic's BaseSettings for typed configuration management,
loading values from environment variables and .env files.

These are process-wide knobs (solver constants, worker count, logging).
Per-experiment parameters live in services.experiment.ExperimentConfig.
"""

import logging

from pydantic_settings import BaseSettings, SettingsConfigDict

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    # Load .env file besides environment variables
    model_config = SettingsConfigDict(
        env_file=".env", env_file_encoding="utf-8", extra="ignore"
    )

    # --- Data-Collection Agent (linear Thompson sampling) ---
    TS_RIDGE: float = 1.0
    TS_PRIOR_VARIANCE: float = 1.0
    # Monte Carlo rounds used to estimate the preliminary probabilities
    TS_MC_DRAWS: int = 1000

    # --- Nuisance Model ---
    NUISANCE_RIDGE: float = 1e-3
    NUISANCE_INTERCEPT: bool = True

    # --- Tree Search ---
    # Absolute tie tolerance, scaled by max(1, sum |scores|) at search time
    TIE_TOLERANCE: float = 1e-12

    # --- Evaluation ---
    SYNTHETIC_N_TEST: int = 100_000
    CLASSIFICATION_N_TEST_CAP: int = 100_000
    # Mixed into the base seed to derive the shared test-set stream
    TEST_SEED_SALT: int = 0x5EED7E57

    # --- Execution ---
    N_JOBS: int = 1

    # --- Logging ---
    LOG_LEVEL: str = "INFO"


# Instantiate settings. Pydantic automatically loads and validates.
try:
    settings = Settings()
except Exception as e:
    logger.critical(f"Failed to load application settings: {e}", exc_info=True)
    raise SystemExit(f"Configuration error: {e}")

# Export the instantiated settings object for other modules to import
__all__ = ["settings"]
