from pydantic_settings import BaseSettings
from pydantic import Field
import os
from pathlib import Path

# Get project root directory
BASE_DIR = Path(__file__).resolve().parent.parent.parent


class Settings(BaseSettings):
    """Lab settings loaded from environment variables"""

    # Application
    app_name: str = Field(default="Bessel Lab", alias="APP_NAME")
    app_version: str = Field(default="1.0.0", alias="APP_VERSION")
    environment: str = Field(default="development", alias="ENVIRONMENT")

    # Simulation defaults
    default_paths: int = Field(default=50_000, alias="DEFAULT_PATHS")
    default_steps: int = Field(default=10_000, alias="DEFAULT_STEPS")
    default_horizon: float = Field(default=1.0, alias="DEFAULT_HORIZON")
    default_seed: int = Field(default=20240601, alias="DEFAULT_SEED")
    default_epsilon: float = Field(default=0.02, alias="DEFAULT_EPSILON")

    # Parallel engine
    workers: int = Field(default=os.cpu_count() or 1, alias="WORKERS")
    batch_size: int = Field(default=500, alias="BATCH_SIZE")

    # Output
    output_dir: str = Field(
        default=str(BASE_DIR / "data/results"),
        alias="OUTPUT_DIR"
    )
    path_dump_dir: str = Field(
        default=str(BASE_DIR / "data/paths"),
        alias="PATH_DUMP_DIR"
    )

    # Logging
    log_level: str = Field(default="INFO", alias="LOG_LEVEL")
    log_file: str = Field(
        default=str(BASE_DIR / "logs/bessel_lab.log"),
        alias="LOG_FILE"
    )

    class Config:
        env_file = ".env"
        case_sensitive = False
        extra = "allow"

    def __init__(self, **kwargs):
        super().__init__(**kwargs)
        # Create necessary directories if they don't exist
        self._create_directories()

    def _create_directories(self):
        """Creates output and log directories"""
        directories = [
            self.output_dir,
            os.path.dirname(self.log_file),
        ]

        for directory in directories:
            Path(directory).mkdir(parents=True, exist_ok=True)


# Global settings instance
settings = Settings()
