import logging
import os
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Where runs are written unless --out is given
OUTPUT_DIR = Path(os.getenv("GBSM_OUTPUT_DIR", "output"))

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(message)s"
LOG_DATEFMT = "%Y-%m-%d %H:%M:%S"


def default_workers() -> int:
    """Worker processes for ensembles, from GBSM_WORKERS (default 1)."""
    value = os.getenv("GBSM_WORKERS", "1")
    try:
        workers = int(value)
    except ValueError:
        raise ValueError(f"GBSM_WORKERS must be an integer, got {value!r}") from None
    return max(workers, 1)


def log_level(debug: bool = False) -> int:
    if debug:
        return logging.DEBUG
    name = os.getenv("GBSM_LOG_LEVEL", "INFO").upper()
    level = logging.getLevelName(name)
    return level if isinstance(level, int) else logging.INFO


def configure_logging(debug: bool = False) -> None:
    """Configure the root logger once for command-line use."""
    logging.basicConfig(level=log_level(debug), format=LOG_FORMAT, datefmt=LOG_DATEFMT)


def slow_tests_enabled() -> bool:
    return os.getenv("GBSM_SLOW_TESTS", "").lower() in ("1", "true", "yes")


def ensure_output_directory(path: Path = OUTPUT_DIR) -> Path:
    """Ensure an output directory exists."""
    path.mkdir(parents=True, exist_ok=True)
    return path
