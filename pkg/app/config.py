import os
from dotenv import load_dotenv, dotenv_values

# Load environment variables
load_dotenv()

QJ_THREADS = os.getenv("QJ_THREADS")
LOG_LEVEL = os.getenv("QJ_LOG_LEVEL", "INFO")
DEFAULT_SEED = int(os.getenv("QJ_SEED", "0"))
DEFAULT_N = int(os.getenv("QJ_N", "1"))
DEFAULT_ALPHA = float(os.getenv("QJ_ALPHA", "0.1"))

# Numerical tolerances
QUAD_EPSREL = 1e-13
FUGACITY_RESIDUAL = 1e-10
ROUTE_AGREEMENT = 1e-6
ROUTE_FAILURE = 1e-4
SWEEP_SLACK = 1e-9
OCCUPATION_CUTOFF = 1e-14
BOSE_TAIL_MASS = 1e-8
PROFILE_POINTS = 2048
ETA_POINTS = 1024


def worker_count(override: int | None = None) -> int:
    """Number of worker threads: explicit override, then QJ_THREADS, then CPU count."""
    if override is not None:
        return max(1, int(override))
    if QJ_THREADS:
        return max(1, int(QJ_THREADS))
    return os.cpu_count() or 1


def load_config_file(path: str) -> dict:
    """Reads a `key = value` file into option defaults.

    Keys are normalized to click parameter names (dashes become underscores).
    """
    values = dotenv_values(path)
    return {key.strip().replace("-", "_"): value for key, value in values.items() if value is not None}
