"""Configuration and paths for softread."""
import os
from pathlib import Path

import numpy as np

# Central storage directory (tabulation cache)
SOFTREAD_DIR = Path(os.environ.get("SOFTREAD_DIR", Path.home() / ".softread"))

# Numerics defaults
DEFAULT_REL_TOL = 1e-8
DEFAULT_ABS_TOL = 1e-12
DEFAULT_MAX_SUBDIVISIONS = 200
DEFAULT_CONCAVE_TOL = 1e-10
# Effective support ends where the pdf drops below this fraction of its peak
SUPPORT_CUTOFF = 1e-14

# Tabulation
TAIL_CUTOFF = 1e-7
NORMALIZATION_TOL = 1e-6
N_QUANTILES = 4097
MIN_BIN_COUNT = 10
DEFAULT_N_SAMPLES = 1_000_000
DEFAULT_GRID_SIZE = 1024
TABULATION_VERSION = 1

# Peak-signal calibration grids, in units of <t_i>
DEFAULT_DURATION_RATIO = 4.0
DEFAULT_MEAS_TIMES = tuple(float(2 * k) for k in range(1, 11))
# Log-spaced below one <t_i>, then linear out to twice the default pulse duration
DEFAULT_BIN_TIMES = tuple(float(t) for t in np.concatenate([
    np.geomspace(0.05, 1.0, 14),
    np.arange(1.25, 8.0 + 1e-9, 0.25),
]))

# Monte Carlo block sizes (part of the stream layout, changing them changes results)
TRIAL_BLOCK = 1 << 16
RECORD_BLOCK = 1 << 10

# Output headers
REPETITION_HEADER = (
    "readout", "snr", "mode", "n", "eta", "trials", "errors", "rate",
    "std_err", "analytic_rate", "seed", "config_hash",
)
ESTIMATION_HEADER = (
    "readout", "snr", "s0", "method", "n_per_record", "n_records", "variance",
    "bias", "mse", "normalized_mse", "asymptotic_normalized_mse", "clamped",
    "failures", "seed", "config_hash",
)
CALIBRATION_HEADER = (
    "readout", "snr", "duration_ratio", "meas_time", "bin_time", "n_bins",
    "threshold", "eps_plus", "eps_minus", "average_error", "seed", "config_hash",
)


def tabulation_dir() -> Path:
    """Directory holding cached peak-signal tabulations."""
    return SOFTREAD_DIR / "tabulations"


def ensure_softread_dir():
    """Create the softread directories if they don't exist."""
    SOFTREAD_DIR.mkdir(parents=True, exist_ok=True)
    tabulation_dir().mkdir(parents=True, exist_ok=True)
