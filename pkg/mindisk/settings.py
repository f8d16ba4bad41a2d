import os
from dotenv import load_dotenv

load_dotenv()

# Geometry tolerances
TOL_GEOM = 1e-8  # analytic-mode curvature identities
TOL_H = 1e-8  # |H| below which a node counts as minimal
TOL_VAR_ABS = 1e-6
TOL_VAR_REL = 1e-3
TOL_EIG = 1e-4

# Newton solver defaults
TOL_RESIDUAL = 1e-9
MAX_NEWTON_ITERS = 40
BACKTRACK_FACTOR = 0.5
MIN_STEP = 2.0 ** -20
ARMIJO_C = 1e-4
LINEAR_RTOL = 1e-10

# Multi-valued graphs
MAX_SHEETS = 64
ENVELOPE_MARGIN = 0.05  # absolute margin on the fitted exponent
MIN_FIT_SAMPLES = 8
LOG_FIT_DEVIATION = 0.05  # above this the profile is not logarithmic

# Structure checks
THRESHOLD_BASE = 4.0  # T_j = THRESHOLD_BASE ** j
SLACK_EDGE_MULTIPLE = 2.0

FLOAT_DIGITS = 17
ARTIFACT_VERSION = "0.3.0"


def worker_count() -> int:
    """Number of worker threads allowed by MINDISK_THREADS (0 means auto)."""
    raw = os.getenv("MINDISK_THREADS", "0")
    try:
        value = int(raw)
    except ValueError:
        value = 0
    if value <= 0:
        return os.cpu_count() or 1
    return value


def log_level() -> str:
    """Log level for the command-line entry point"""
    return os.getenv("MINDISK_LOG_LEVEL", "WARNING").upper()
