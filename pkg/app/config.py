import os
from pathlib import Path
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""
    # Base directory
    BASE_DIR: Path = Path(__file__).resolve().parent.parent

    # Environment configurations
    DEBUG: bool = True
    API_PREFIX: str = "/api/v1"
    APP_NAME: str = "EPR QKD Simulator"
    HOST: str = "0.0.0.0"
    PORT: int = 8000
    LOG_LEVEL: str = "info"

    # Results store
    DATABASE_URL: str = "sqlite:///" + str(Path(__file__).resolve().parent.parent / "qkd_runs.db")

    # Where CSV files and transcript logs go when a config names no path
    OUTPUT_DIR: str = str(Path(__file__).resolve().parent.parent / "output")

    # Privacy-amplification matrix search
    EXHAUSTIVE_WEIGHT_LIMIT: int = 24
    MATRIX_ATTEMPT_BUDGET: int = 10_000

    # Cascade defaults
    CASCADE_PASS_COUNT: int = 4
    CASCADE_BLOCK_CONSTANT: float = 0.73
    CASCADE_MIN_ERROR_RATE: float = 0.01
    ESTIMATION_FRACTION: float = 0.1

    # Parallel session execution for run/sweep
    SWEEP_WORKERS: int = 1

    def initialize(self):
        """Initialize required directories."""
        os.makedirs(self.OUTPUT_DIR, exist_ok=True)

    class Config:
        env_file = ".env"
        env_file_encoding = "utf-8"
        case_sensitive = True


# Create a settings instance
settings = Settings()
