from datetime import date
from pathlib import Path

from pydantic_settings import BaseSettings

BASE_DIR = Path(__file__).resolve().parent.parent
PACKAGE_DIR = BASE_DIR / "btw"


class Settings(BaseSettings):
    # Output
    color: bool = False
    log_level: str = "WARNING"

    # Simulation
    seed: int = 0
    max_steps: int = 10000
    precondition_timeout: int = 604800  # 7 days
    network_limit: int = 1000  # sub-decision activations per complex decision
    checkpoint_version: int = 1

    # Calendar
    epoch: date = date(1996, 1, 1)  # logical day 0
    month_days: int = 30
    year_days: int = 365

    # Validation
    strict_allocation: bool = False

    model_config = {
        "env_prefix": "BTW_",
        "env_file": str(BASE_DIR / ".env"),
        "env_file_encoding": "utf-8",
        "extra": "ignore",
    }


settings = Settings()

FIXTURES_DIR = PACKAGE_DIR / "fixtures"
TEMPLATES_DIR = PACKAGE_DIR / "templates"

# Exit codes are a stable contract for the command line
EXIT_OK = 0
EXIT_INVALID = 1
EXIT_STOPPED = 2
EXIT_USAGE = 3
