"""
Regret Lab Configuration Settings
"""
from pathlib import Path
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

class Settings(BaseSettings):
    """Application settings and configuration"""

    model_config = SettingsConfigDict(
        env_file=".env", case_sensitive=False, extra="ignore", populate_by_name=True
    )

    # Application
    app_name: str = "Regret Lab"
    app_version: str = "1.0.0"

    # Output Configuration
    output_dir: Path = Field(default=Path("./results"), validation_alias="REGRET_LAB_OUTPUT_DIR")

    # Execution Configuration
    default_jobs: int = Field(default=1, ge=1, validation_alias="REGRET_LAB_JOBS")
    verify_spd: bool = Field(default=False, validation_alias="REGRET_LAB_VERIFY_SPD")

    # Cost caps for the quadratic-time paths
    sos_max_steps: int = Field(default=5000, validation_alias="REGRET_LAB_SOS_MAX_STEPS")
    lemma1_max_steps: int = Field(default=2000, validation_alias="REGRET_LAB_LEMMA1_MAX_STEPS")

    # Logging Configuration
    log_level: str = Field(default="INFO", validation_alias="LOG_LEVEL")
    log_file: str = Field(default="regret_lab.log", validation_alias="LOG_FILE")

    # Paths
    project_root: Path = Path(__file__).parent.parent

# Global settings instance
settings = Settings()
