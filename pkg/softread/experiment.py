"""Experiment configuration and runners behind the softread CLI."""
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from .config import (
    CALIBRATION_HEADER,
    DEFAULT_BIN_TIMES,
    DEFAULT_DURATION_RATIO,
    DEFAULT_GRID_SIZE,
    DEFAULT_MEAS_TIMES,
    DEFAULT_N_SAMPLES,
    TABULATION_VERSION,
    ensure_softread_dir,
    tabulation_dir,
)
from .display import format_rows, report_path
from .estimation import Method, UninformativeReadoutError, asymptotic_mse, mse_monte_carlo
from .peak import PeakSignalParams, optimize_peak_parameters, tabulate_peak_distributions
from .readout import (
    GaussianReadout,
    ReadoutFormatError,
    ReadoutModel,
    TabulatedReadout,
    conditional_error_rates,
)
from .repcode import (
    DecodingMode,
    EncodingChannel,
    estimate_error_rate_mc,
    gaussian_majority_error,
    gaussian_soft_error,
)
from .streams import MAX_SEED

logger = logging.getLogger(__name__)

EXPERIMENTS = ("repetition", "estimation", "calibrate", "tabulate")
READOUTS = ("gaussian", "peak-signal", "tabulated-file")
FORMATS = ("csv", "json")

# Fields that never change results
RUNTIME_FIELDS = ("workers", "output_path", "format")


class ConfigError(ValueError):
    """Invalid experiment configuration; `issues` lists every problem found."""

    def __init__(self, issues: list[str]):
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {i}" for i in issues))
        self.issues = issues


@dataclass
class ExperimentConfig:
    """One experiment run. Times for the peak-signal readout are in units of <t_i>."""
    experiment: str = "repetition"
    readout: str = "gaussian"
    snr: float = 2.0
    snr_grid: list[float] = field(default_factory=list)
    eta: float = 0.0
    n_min: int = 1
    n_max: int = 9
    trials: int = 1_000_000
    records: int = 50_000
    n_per_record: int = 100
    s0_grid: list[float] = field(default_factory=lambda: [0.0])
    seed: Optional[int] = None
    output_path: str = ""
    format: str = "csv"
    workers: int = 1
    tabulated_path: str = ""
    duration_ratio: float = DEFAULT_DURATION_RATIO
    meas_time: Optional[float] = None
    bin_time: Optional[float] = None
    meas_times: list[float] = field(default_factory=lambda: list(DEFAULT_MEAS_TIMES))
    bin_times: list[float] = field(default_factory=lambda: list(DEFAULT_BIN_TIMES))
    n_samples: int = DEFAULT_N_SAMPLES
    grid_size: int = DEFAULT_GRID_SIZE

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, data: str) -> "ExperimentConfig":
        try:
            doc = json.loads(data)
        except json.JSONDecodeError as e:
            raise ConfigError([f"config is not valid JSON: {e}"]) from e
        if not isinstance(doc, dict):
            raise ConfigError(["config must be a JSON object"])
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError([f"unknown key {k!r}" for k in unknown])
        return cls(**doc)

    @classmethod
    def load(cls, path: Path) -> "ExperimentConfig":
        try:
            return cls.from_json(Path(path).read_text())
        except OSError as e:
            raise ConfigError([f"cannot read config {path}: {e}"]) from e

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        """Copy with every non-None override applied."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    @property
    def snrs(self) -> list[float]:
        return list(self.snr_grid) or [self.snr]

    def validate(self) -> list[str]:
        """Return a list of problems; empty when the config is usable."""
        issues = []
        if self.experiment not in EXPERIMENTS:
            issues.append(f"experiment must be one of {', '.join(EXPERIMENTS)}, got {self.experiment!r}")
        if self.readout not in READOUTS:
            issues.append(f"readout must be one of {', '.join(READOUTS)}, got {self.readout!r}")
        if self.format not in FORMATS:
            issues.append(f"format must be csv or json, got {self.format!r}")
        if self.seed is None:
            issues.append("seed is required")
        elif isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed <= MAX_SEED:
            issues.append(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")

        for name in ("snr", "duration_ratio"):
            if not _positive(getattr(self, name)):
                issues.append(f"{name} must be positive, got {getattr(self, name)!r}")
        if any(not _positive(r) for r in self.snr_grid):
            issues.append("snr_grid entries must be positive")
        if not _number(self.eta) or not 0.0 <= self.eta <= 0.5:
            issues.append(f"eta must lie in [0, 0.5], got {self.eta!r}")

        for name in ("n_min", "trials", "records", "n_per_record", "n_samples"):
            if not _count(getattr(self, name), 1):
                issues.append(f"{name} must be an integer >= 1, got {getattr(self, name)!r}")
        if not _count(self.n_max, 1) or (_count(self.n_min, 1) and self.n_max < self.n_min):
            issues.append(f"n range [{self.n_min}, {self.n_max}] is empty")
        if not _count(self.grid_size, 2):
            issues.append(f"grid_size must be an integer >= 2, got {self.grid_size!r}")
        if not _count(self.workers, 0):
            issues.append(f"workers must be an integer >= 0, got {self.workers!r}")
        if not self.s0_grid:
            issues.append("s0_grid is empty")
        elif any(not _number(s) or not -1.0 <= s <= 1.0 for s in self.s0_grid):
            issues.append("s0_grid entries must lie in [-1, 1]")

        if self.readout == "tabulated-file" and not self.tabulated_path:
            issues.append("readout 'tabulated-file' needs tabulated_path")
        if self.experiment in ("calibrate", "tabulate"):
            if self.readout != "peak-signal":
                issues.append(f"{self.experiment} only applies to the peak-signal readout")
            if not self.output_path:
                issues.append(f"{self.experiment} needs output_path for the tabulation JSON")
        if self.experiment == "calibrate" or self.readout == "peak-signal":
            if not self.meas_times or any(not _positive(t) for t in self.meas_times):
                issues.append("meas_times must be a non-empty list of positive times")
            if not self.bin_times or any(not _positive(t) for t in self.bin_times):
                issues.append("bin_times must be a non-empty list of positive times")
        if self.experiment == "tabulate":
            if not (_positive(self.meas_time) and _positive(self.bin_time)):
                issues.append("tabulate needs positive meas_time and bin_time")
            elif self.bin_time > self.meas_time:
                issues.append(f"bin_time {self.bin_time} exceeds meas_time {self.meas_time}")
        return issues

    def check(self) -> "ExperimentConfig":
        issues = self.validate()
        if issues:
            raise ConfigError(issues)
        return self

    def config_hash(self) -> str:
        """Short digest of every result-affecting field."""
        doc = {k: v for k, v in asdict(self).items() if k not in RUNTIME_FIELDS}
        canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def _number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _positive(value) -> bool:
    return _number(value) and value > 0


def _count(value, minimum: int) -> bool:
    return isinstance(value, int) and not isinstance(value, bool) and value >= minimum


def _peak_base(config: ExperimentConfig, snr: float) -> PeakSignalParams:
    # mean_turn_on is the time unit; meas_time/bin_time are placeholders for the search
    return PeakSignalParams(mean_turn_on=1.0, mean_duration=config.duration_ratio,
                            r=snr, meas_time=1.0, bin_time=1.0)


def calibration_key(config: ExperimentConfig, snr: float) -> str:
    """Cache key of a peak-signal calibration."""
    doc = {
        "version": TABULATION_VERSION,
        "snr": snr,
        "duration_ratio": config.duration_ratio,
        "meas_times": list(config.meas_times),
        "bin_times": list(config.bin_times),
        "n_samples": config.n_samples,
        "grid_size": config.grid_size,
        "seed": config.seed,
    }
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def build_readout(config: ExperimentConfig, snr: float) -> ReadoutModel:
    """Readout model for one SNR; peak-signal calibrations are cached on disk."""
    if config.readout == "gaussian":
        return GaussianReadout(snr)
    if config.readout == "tabulated-file":
        try:
            return TabulatedReadout.load(Path(config.tabulated_path))
        except OSError as e:
            raise ConfigError([f"cannot read tabulation {config.tabulated_path}: {e}"]) from e

    ensure_softread_dir()
    cached = tabulation_dir() / f"{calibration_key(config, snr)}.json"
    if cached.exists():
        try:
            readout = TabulatedReadout.load(cached)
            logger.info("using cached calibration %s", cached)
            return readout
        except ReadoutFormatError as e:
            logger.warning("ignoring unreadable cached calibration %s: %s", cached, e)
    calibration = optimize_peak_parameters(
        _peak_base(config, snr),
        config.meas_times,
        config.bin_times,
        config.n_samples,
        config.grid_size,
        config.seed,
    )
    calibration.readout.save(cached)
    return calibration.readout


def _readout_snr(readout: ReadoutModel, snr: float) -> float:
    if isinstance(readout, TabulatedReadout):
        return float(readout.params.get("r", snr))
    return snr


def run_repetition(config: ExperimentConfig) -> list[dict]:
    """Error-rate rows for every n in range and both decoding modes."""
    config.check()
    digest = config.config_hash()
    readout = build_readout(config, config.snr)
    snr = _readout_snr(readout, config.snr)
    channel = EncodingChannel(config.eta)
    threshold = readout.optimal_threshold()
    analytic = isinstance(readout, GaussianReadout) and config.eta == 0.0

    rows = []
    for n in range(config.n_min, config.n_max + 1):
        for mode in DecodingMode:
            estimate = estimate_error_rate_mc(
                readout, mode, n, channel, config.trials, config.seed,
                workers=config.workers, threshold=threshold,
            )
            analytic_rate = None
            if analytic:
                error_fn = gaussian_soft_error if mode is DecodingMode.ANALOG else gaussian_majority_error
                analytic_rate = error_fn(snr, n)
            logger.info("n=%d %s: rate %.4g +/- %.2g", n, mode.value, estimate.rate, estimate.std_err)
            rows.append({
                "readout": readout.name,
                "snr": snr,
                "mode": mode.value,
                "n": n,
                "eta": config.eta,
                "trials": estimate.trials,
                "errors": estimate.errors,
                "rate": estimate.rate,
                "std_err": estimate.std_err,
                "analytic_rate": analytic_rate,
                "seed": config.seed,
                "config_hash": digest,
            })
    return rows


def run_estimation(config: ExperimentConfig) -> list[dict]:
    """Asymptotic and simulated normalized MSEs over the SNR and s0 grids."""
    config.check()
    digest = config.config_hash()
    rows = []
    for requested_snr in config.snrs:
        readout = build_readout(config, requested_snr)
        snr = _readout_snr(readout, requested_snr)
        threshold = readout.optimal_threshold()
        for s0 in config.s0_grid:
            for method in Method:
                try:
                    asymptotic = asymptotic_mse(readout, s0, method, threshold=threshold)
                except (UninformativeReadoutError, ValueError) as e:
                    logger.info("no asymptotic %s value at s0=%g: %s", method.value, s0, e)
                    asymptotic = None
                report = mse_monte_carlo(
                    readout, s0, method, config.n_per_record, config.records, config.seed,
                    workers=config.workers, threshold=threshold,
                )
                logger.info("r=%g s0=%g %s: N*mse %.4g (asymptotic %s)", snr, s0,
                            method.value, report.normalized_mse, asymptotic)
                rows.append({
                    "readout": readout.name,
                    "snr": snr,
                    "s0": s0,
                    "method": method.value,
                    "n_per_record": report.n_per_record,
                    "n_records": report.n_records,
                    "variance": report.variance,
                    "bias": report.bias,
                    "mse": report.mse,
                    "normalized_mse": report.normalized_mse,
                    "asymptotic_normalized_mse": asymptotic,
                    "clamped": report.clamped,
                    "failures": report.failures,
                    "seed": config.seed,
                    "config_hash": digest,
                })
    return rows


def _calibration_row(config, params: PeakSignalParams, rates) -> dict:
    return {
        "readout": "peak-signal",
        "snr": params.r,
        "duration_ratio": params.mean_duration / params.mean_turn_on,
        "meas_time": params.meas_time / params.mean_turn_on,
        "bin_time": params.bin_time / params.mean_turn_on,
        "n_bins": params.n_bins,
        "threshold": rates.threshold,
        "eps_plus": rates.eps_plus,
        "eps_minus": rates.eps_minus,
        "average_error": rates.average,
        "seed": config.seed,
        "config_hash": config.config_hash(),
    }


def _persist(config: ExperimentConfig, readout: TabulatedReadout, rows: list[dict]):
    output = Path(config.output_path)
    readout.save(output)
    report = report_path(output, config.format)
    report.write_text(format_rows(rows, CALIBRATION_HEADER, config.format))
    logger.info("wrote %s and %s", output, report)


def run_calibrate(config: ExperimentConfig) -> list[dict]:
    """Optimize (tau_M, tau_b, nu) and persist the winning tabulation."""
    config.check()
    calibration = optimize_peak_parameters(
        _peak_base(config, config.snr),
        config.meas_times,
        config.bin_times,
        config.n_samples,
        config.grid_size,
        config.seed,
    )
    rows = [_calibration_row(config, calibration.params, calibration.rates)]
    _persist(config, calibration.readout, rows)
    ensure_softread_dir()
    calibration.readout.save(tabulation_dir() / f"{calibration_key(config, config.snr)}.json")
    return rows


def run_tabulate(config: ExperimentConfig) -> list[dict]:
    """Tabulate the peak-signal readout at fixed (tau_M, tau_b)."""
    config.check()
    params = replace(_peak_base(config, config.snr),
                     meas_time=config.meas_time, bin_time=config.bin_time)
    readout = tabulate_peak_distributions(params, config.n_samples, config.grid_size, config.seed)
    rates = conditional_error_rates(readout, readout.optimal_threshold())
    rows = [_calibration_row(config, params, rates)]
    _persist(config, readout, rows)
    return rows


RUNNERS = {
    "repetition": run_repetition,
    "estimation": run_estimation,
    "calibrate": run_calibrate,
    "tabulate": run_tabulate,
}
