# app/config.py
import math
import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

TOOL_NAME = "psm-sim"
TOOL_VERSION = "0.4.0"
ENV_PREFIX = "PSM_"


def _env(name: str, default):
    """Read PSM_<name> from the environment, cast to the type of the default."""
    raw = os.getenv(ENV_PREFIX + name)
    if raw is None:
        return default
    if isinstance(default, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    return type(default)(raw)


# Directory and File Paths
ROOT_DIR = Path(__file__).resolve().parent.parent
DATA_DIR = Path(_env("DATA_DIR", str(ROOT_DIR / "data")))
RESPONSE_DIR = DATA_DIR / "responses"
DEFAULT_CONFIG_FILE = _env("CONFIG", "run_config.json")
DEFAULT_OUTPUT_DIR = _env("OUT", "runs/latest")
MANIFEST_FILE = "manifest.json"
LOCK_FILE = ".psm.lock"

# Drive / simulation defaults
DEFAULT_REP_RATE = _env("REP_RATE", 1e9)
DEFAULT_SEED = _env("SEED", 20240607)
DEFAULT_N_TRACES = _env("N_TRACES", 150)
DEFAULT_PATTERN_LENGTH = 100
DEFAULT_PULSE_WIDTH = 200e-12
SIM_SAMPLE_RATE = _env("SIM_SAMPLE_RATE", 120e9)
SCOPE_SAMPLE_RATE = 40e9

# Equipment chain
BESSEL_ORDER = _env("BESSEL_ORDER", 4)
AWG_CUTOFF_HZ = 25e9
SCOPE_CUTOFF_HZ = 12e9
AMPLIFIER_TABLE = RESPONSE_DIR / "rf_amplifier_12ghz.csv"
MODULATOR_TABLE = RESPONSE_DIR / "intensity_modulator_15ghz.csv"
ROLLOFF_DB_PER_OCTAVE = 6.0
RATE_RATIO_TOLERANCE = 1e-9

# Analysis
CLAMP_TOLERANCE = 1e-6
STOKES_TOLERANCE = 1e-3
ALIGNMENT_MIN_CONFIDENCE = 0.5
DEFAULT_N_MAX = 8
DEFAULT_L_MAX = 7
DEFAULT_FIT_LAGS = 16
DRIFT_LIMIT_RAD = 0.007 * math.pi
CSV_SIGNIFICANT_DIGITS = 9
FLOAT_FORMAT = f"%.{CSV_SIGNIFICANT_DIGITS}g"

# Path-selection source model
I_THRESHOLD_MA = 12.0
I_MAX_MA = 25.0
I_SCALE_MA = 2.0
I_MIN_SWEEP_MA = (10.0, 5.0, 3.5, 2.0)
LASER_PULSE_WIDTH = 40e-12
READINGS_PER_POINT = 60

# Exit codes
EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_VALIDATION = 2
