"""Peak-signal readout: generative pulse process, tabulation and calibration.

The excited state |+> produces a square pulse (level +1) on a baseline of -1,
starting at an exponentially distributed turn-on time and lasting an
exponentially distributed duration. The measurement window tau_M is cut into
N_b bins of length tau_b, white noise averages to variance sigma_b^2 in each
bin, and the observable is the largest bin average. The ground state |-> is
the bare baseline.
"""
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtri

from .config import (
    DEFAULT_BIN_TIMES,
    DEFAULT_GRID_SIZE,
    DEFAULT_MEAS_TIMES,
    DEFAULT_N_SAMPLES,
    MIN_BIN_COUNT,
    TAIL_CUTOFF,
)
from .numerics import NumericalError, normal_cdf
from .readout import ConditionalErrorRates, State, TabulatedReadout, conditional_error_rates

logger = logging.getLogger(__name__)

# Samples are simulated in chunks to bound memory
SIMULATION_CHUNK = 1 << 18


@dataclass(frozen=True)
class PeakSignalParams:
    """Physical parameters of the pulse process (times in any common unit)."""
    mean_turn_on: float
    mean_duration: float
    r: float
    meas_time: float
    bin_time: float

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.n_bins < 1:
            raise ValueError(
                f"bin_time {self.bin_time} exceeds meas_time {self.meas_time}: no complete bin"
            )

    @property
    def n_bins(self) -> int:
        # Tolerate ratios like 2.0 / 0.1 landing just below an integer
        return int(math.floor(self.meas_time / self.bin_time * (1.0 + 1e-12)))

    @property
    def window(self) -> float:
        """Time covered by the bins."""
        return self.n_bins * self.bin_time

    @property
    def sigma_bin(self) -> float:
        """Noise standard deviation of one bin average."""
        return math.sqrt(self.mean_duration / (self.r * self.bin_time))


@dataclass
class PeakCalibration:
    """Outcome of the (tau_M, tau_b) grid search."""
    params: PeakSignalParams
    threshold: float
    rates: ConditionalErrorRates
    readout: TabulatedReadout
    warnings: list[str] = field(default_factory=list)


def peak_ground_cdf(x, params: PeakSignalParams):
    """Exact cdf of the ground-state outcome: Phi((x + 1) / sigma_b) ** N_b."""
    return normal_cdf((np.asarray(x, dtype=float) + 1.0) / params.sigma_bin) ** params.n_bins


def bin_means(params: PeakSignalParams, turn_on: float, duration: float) -> np.ndarray:
    """Mean signal of each bin for a pulse on [turn_on, turn_on + duration]."""
    edges = np.arange(params.n_bins + 1) * params.bin_time
    start = min(turn_on, params.meas_time)
    stop = min(turn_on + duration, params.meas_time)
    overlap = np.clip(np.minimum(edges[1:], stop) - np.maximum(edges[:-1], start), 0.0, None)
    return -1.0 + 2.0 * overlap / params.bin_time


def simulate_peak_trace(params: PeakSignalParams, state: int, rng: np.random.Generator) -> float:
    """Simulate one binned trace and return the largest bin average."""
    if state > 0:
        turn_on = rng.exponential(params.mean_turn_on)
        duration = rng.exponential(params.mean_duration)
        means = bin_means(params, turn_on, duration)
    else:
        means = np.full(params.n_bins, -1.0)
    return float(np.max(means + params.sigma_bin * rng.standard_normal(params.n_bins)))


def simulate_peak_outcomes(
    params: PeakSignalParams,
    state: int,
    size: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Vectorized sampler with the same distribution as simulate_peak_trace.

    Bins fall into four groups: baseline bins (mean -1), bins fully covered by
    the pulse (mean +1), and the two partially covered bins at the pulse edges.
    The maximum of k iid bins of one group is drawn directly from
    Phi((x - mu) / sigma_b) ** k by inverse transform.
    """
    out = np.empty(size)
    for begin in range(0, size, SIMULATION_CHUNK):
        stop = min(begin + SIMULATION_CHUNK, size)
        out[begin:stop] = _simulate_chunk(params, state, stop - begin, rng)
    return out


def _max_of_iid(mean: float, sigma: float, count, rng: np.random.Generator) -> np.ndarray:
    """Max of `count` iid N(mean, sigma^2) draws; -inf where count is 0."""
    count = np.asarray(count)
    # Open interval (0, 1) so neither tail maps to infinity
    u = (rng.integers(0, 1 << 53, size=count.shape) + 0.5) / float(1 << 53)
    with np.errstate(divide="ignore"):
        upper = -np.expm1(np.log(u) / np.maximum(count, 1))
    return np.where(count > 0, mean - sigma * ndtri(upper), -np.inf)


def _simulate_chunk(params: PeakSignalParams, state: int, size: int, rng: np.random.Generator):
    sigma = params.sigma_bin
    n_bins = params.n_bins
    if state <= 0:
        return _max_of_iid(-1.0, sigma, np.full(size, n_bins), rng)

    tau_b = params.bin_time
    window = params.window
    turn_on = rng.exponential(params.mean_turn_on, size)
    turn_off = np.minimum(turn_on + rng.exponential(params.mean_duration, size),
                          params.meas_time)
    on = turn_on < window

    first = np.where(on, np.floor(turn_on / tau_b), n_bins).astype(np.int64)
    last = np.minimum(np.floor(turn_off / tau_b), n_bins).astype(np.int64)
    last = np.where(on, last, n_bins)
    single = on & (last == first)

    # Start bin: overlap up to its right edge (or the whole pulse if it fits)
    start_overlap = np.where(single, turn_off - turn_on, (first + 1) * tau_b - turn_on)
    # End bin exists when the pulse ends inside the window in a later bin
    has_end = on & ~single & (last < n_bins)
    end_overlap = np.where(has_end, turn_off - last * tau_b, 0.0)
    n_full = np.where(on & ~single, last - first - 1, 0)
    n_touched = np.where(on, 1 + n_full + has_end, 0)
    n_baseline = n_bins - n_touched

    peak = _max_of_iid(-1.0, sigma, n_baseline, rng)
    peak = np.maximum(peak, _max_of_iid(1.0, sigma, n_full, rng))
    start_value = -1.0 + 2.0 * start_overlap / tau_b + sigma * rng.standard_normal(size)
    peak = np.where(on, np.maximum(peak, start_value), peak)
    end_value = -1.0 + 2.0 * end_overlap / tau_b + sigma * rng.standard_normal(size)
    peak = np.where(has_end, np.maximum(peak, end_value), peak)
    return peak


def trim_tails(weights: np.ndarray, cutoff: float = TAIL_CUTOFF) -> tuple[np.ndarray, float]:
    """Zero the outer bins whose cumulative weight from either end stays below `cutoff`.

    Returns the trimmed weights and the weight removed.
    """
    weights = np.asarray(weights, dtype=float)
    cumulative = np.cumsum(weights)
    survival = cumulative[-1] - cumulative + weights
    kept = (cumulative >= cutoff) & (survival >= cutoff)
    if not np.any(kept):
        return weights.copy(), 0.0
    first, last = np.flatnonzero(kept)[[0, -1]]
    trimmed = np.zeros_like(weights)
    trimmed[first:last + 1] = weights[first:last + 1]
    return trimmed, float(weights.sum() - trimmed.sum())


def tabulate_peak_distributions(
    params: PeakSignalParams,
    n_samples: int = DEFAULT_N_SAMPLES,
    grid_size: int = DEFAULT_GRID_SIZE,
    seed: int = 0,
) -> TabulatedReadout:
    """Histogram both conditional distributions onto a shared grid.

    Each tail is cut where its cumulative weight falls below TAIL_CUTOFF; the
    remainder is renormalized and turned into cdf and inverse-cdf tables.
    """
    if n_samples < 1 or grid_size < 2:
        raise ValueError("need n_samples >= 1 and grid_size >= 2")
    plus_seed, minus_seed = np.random.SeedSequence(seed).spawn(2)
    samples = {
        State.PLUS: simulate_peak_outcomes(params, State.PLUS, n_samples,
                                           np.random.default_rng(plus_seed)),
        State.MINUS: simulate_peak_outcomes(params, State.MINUS, n_samples,
                                            np.random.default_rng(minus_seed)),
    }
    lower = min(float(s.min()) for s in samples.values())
    upper = max(float(s.max()) for s in samples.values())
    edges = np.linspace(lower, upper, grid_size + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])

    densities = {}
    lost = {}
    warnings = []
    for state, values in samples.items():
        counts, _ = np.histogram(values, bins=edges)
        weights = counts / n_samples
        cumulative = np.cumsum(weights)
        trimmed, lost[state] = trim_tails(weights)
        densities[state] = trimmed / (edges[1] - edges[0])

        interior = (cumulative >= 0.01) & (cumulative - weights <= 0.99)
        sparse = int(np.count_nonzero(interior & (counts < MIN_BIN_COUNT)))
        if sparse:
            message = (f"{'+' if state > 0 else '-'} distribution: {sparse} interior bins "
                       f"hold fewer than {MIN_BIN_COUNT} samples")
            logger.warning(message)
            warnings.append(message)

    label = {State.PLUS: "plus", State.MINUS: "minus"}
    return TabulatedReadout.from_pdfs(
        centers,
        densities[State.PLUS],
        densities[State.MINUS],
        params={"kind": "peak-signal", **asdict(params), "n_bins": params.n_bins},
        provenance={
            "n_samples": n_samples,
            "seed": seed,
            "grid_size": grid_size,
            "tail_weight_lost": {label[s]: w for s, w in lost.items()},
            "warnings": warnings,
        },
    )


def optimize_peak_parameters(
    base: PeakSignalParams,
    meas_times: Optional[Sequence[float]] = None,
    bin_times: Optional[Sequence[float]] = None,
    n_samples: int = DEFAULT_N_SAMPLES,
    grid_size: int = DEFAULT_GRID_SIZE,
    seed: int = 0,
) -> PeakCalibration:
    """Grid search over (tau_M, tau_b) minimising the single-shot error.

    Grid values are in units of base.mean_turn_on. Every candidate is
    tabulated with the same seed, and the optimal threshold is scanned.
    """
    meas_times = DEFAULT_MEAS_TIMES if meas_times is None else tuple(meas_times)
    bin_times = DEFAULT_BIN_TIMES if bin_times is None else tuple(bin_times)
    if not meas_times or not bin_times:
        raise ValueError("calibration grids must be non-empty")

    best: Optional[PeakCalibration] = None
    for meas_time in meas_times:
        for bin_time in bin_times:
            if bin_time > meas_time:
                continue
            params = replace(
                base,
                meas_time=meas_time * base.mean_turn_on,
                bin_time=bin_time * base.mean_turn_on,
            )
            readout = tabulate_peak_distributions(params, n_samples, grid_size, seed)
            try:
                threshold = readout.optimal_threshold()
            except NumericalError as e:
                logger.debug("skipping tau_M=%g tau_b=%g: %s", meas_time, bin_time, e)
                continue
            rates = conditional_error_rates(readout, threshold)
            logger.debug("tau_M=%g tau_b=%g nu=%.4f error=%.5f",
                         meas_time, bin_time, threshold, rates.average)
            if best is None or rates.average < best.rates.average:
                best = PeakCalibration(params, threshold, rates, readout, list(readout.warnings))
                best_times = (meas_time, bin_time)

    if best is None:
        raise NumericalError("no calibration candidate produced a usable threshold")
    for name, value, grid in zip(("tau_M", "tau_b"), best_times, (meas_times, bin_times)):
        if len(grid) > 1 and value in (min(grid), max(grid)):
            message = (f"best {name} = {value:g} <t_i> lies on the edge of the searched grid "
                       f"[{min(grid):g}, {max(grid):g}]; the optimum may lie outside it")
            logger.warning(message)
            best.warnings.append(message)
    logger.info(
        "calibrated peak-signal readout: tau_M=%g tau_b=%g N_b=%d nu=%.4f error=%.4f",
        best.params.meas_time, best.params.bin_time, best.params.n_bins,
        best.threshold, best.rates.average,
    )
    return best
