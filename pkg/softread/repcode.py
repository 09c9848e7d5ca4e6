"""Maximum-likelihood decoding of the N-qubit repetition code.

A logical |1> (|0>) is encoded as N physical qubits in |+> (|->); each qubit
flips independently with probability eta before readout. The decoder compares
the likelihood of the measurement record under both logical states, either
from the analog outcomes or from thresholded bits.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, NewType, Optional, Union

import numpy as np

from .config import TRIAL_BLOCK
from .numerics import NumericalError, erfc, regularized_incomplete_beta
from .readout import ConditionalErrorRates, ReadoutModel, State, conditional_error_rates
from .streams import block_rng, map_blocks

logger = logging.getLogger(__name__)

# log(Lambda); +/-inf when one conditional density vanishes
LogLikelihoodRatio = NewType("LogLikelihoodRatio", float)


class DecodingMode(str, Enum):
    ANALOG = "analog"
    THRESHOLDED = "thresholded"


@dataclass(frozen=True)
class EncodingChannel:
    """Uncorrelated bit flips with probability eta during encoding."""
    eta: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.eta <= 0.5:
            raise ValueError(f"eta must lie in [0, 0.5], got {self.eta}")


@dataclass(frozen=True, eq=False)
class MeasurementRecord:
    """Outcomes O_1 ... O_N of one readout of the code block."""
    outcomes: np.ndarray

    def __post_init__(self):
        outcomes = np.array(self.outcomes, dtype=float).ravel()
        if outcomes.size < 1:
            raise ValueError("a measurement record needs at least one outcome")
        if not np.all(np.isfinite(outcomes)):
            raise ValueError("measurement outcomes must be finite")
        outcomes.setflags(write=False)
        object.__setattr__(self, "outcomes", outcomes)

    def __len__(self) -> int:
        return self.outcomes.size


@dataclass(frozen=True)
class ErrorRateEstimate:
    errors: int
    trials: int
    rate: float
    std_err: float

    @classmethod
    def from_counts(cls, errors: int, trials: int) -> "ErrorRateEstimate":
        if trials < 1 or not 0 <= errors <= trials:
            raise ValueError(f"invalid counts: {errors} errors in {trials} trials")
        rate = errors / trials
        return cls(errors, trials, rate, math.sqrt(rate * (1.0 - rate) / trials))


def _as_record(record: Union[MeasurementRecord, np.ndarray]) -> np.ndarray:
    if isinstance(record, MeasurementRecord):
        return record.outcomes
    return MeasurementRecord(record).outcomes


def analog_terms(readout: ReadoutModel, outcomes: np.ndarray, eta: float) -> np.ndarray:
    """Per-outcome log ratios of the eta-mixed densities, vectorized.

    Outcomes where both densities vanish carry no information and give 0.
    """
    log_plus = readout.log_pdf(outcomes, State.PLUS)
    log_minus = readout.log_pdf(outcomes, State.MINUS)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_keep = math.log1p(-eta) if eta < 1.0 else -math.inf
        log_flip = math.log(eta) if eta > 0.0 else -math.inf
        numerator = np.logaddexp(log_keep + log_plus, log_flip + log_minus)
        denominator = np.logaddexp(log_keep + log_minus, log_flip + log_plus)
        terms = numerator - denominator
    dead = np.isneginf(log_plus) & np.isneginf(log_minus)
    if np.any(dead):
        logger.warning("%d outcome(s) outside both densities treated as uninformative",
                       int(np.count_nonzero(dead)))
        terms = np.where(dead, 0.0, terms)
    return terms


def log_lr_analog(
    readout: ReadoutModel,
    record: Union[MeasurementRecord, np.ndarray],
    channel: EncodingChannel,
) -> LogLikelihoodRatio:
    """sum_i ln[((1-eta)P(O_i|+) + eta P(O_i|-)) / ((1-eta)P(O_i|-) + eta P(O_i|+))].

    At eta = 0 an outcome only one state can produce contributes +/-inf; a
    record holding such outcomes for both states gives nan, which decide()
    treats as a tie.
    """
    terms = analog_terms(readout, _as_record(record), channel.eta)
    with np.errstate(invalid="ignore"):
        return LogLikelihoodRatio(float(np.sum(terms)))


def thresholded_terms(rates: ConditionalErrorRates, eta: float) -> tuple[float, float]:
    """Log ratios contributed by one c_+ and by one c_- outcome."""
    keep, flip = 1.0 - eta, eta
    eps_plus, eps_minus = rates.eps_plus, rates.eps_minus
    with np.errstate(divide="ignore"):
        # Each term as log(num) - log(den) so symmetric rates give exact negatives
        per_plus = (np.log(keep * (1.0 - eps_plus) + flip * eps_minus)
                    - np.log(keep * eps_minus + flip * (1.0 - eps_plus)))
        per_minus = (np.log(keep * eps_plus + flip * (1.0 - eps_minus))
                     - np.log(keep * (1.0 - eps_minus) + flip * eps_plus))
    return float(per_plus), float(per_minus)


def log_lr_thresholded(
    rates: ConditionalErrorRates,
    n_plus,
    n_total: int,
    channel: EncodingChannel,
):
    """Log-likelihood ratio given n_plus of n_total outcomes above threshold.

    Vectorized over n_plus. A perfect readout (eps = 0 at eta = 0) gives +/-inf;
    a record that contradicts it both ways gives nan, which decide() treats as
    a tie.
    """
    n_plus = np.asarray(n_plus)
    if n_total < 1 or np.any(n_plus < 0) or np.any(n_plus > n_total):
        raise ValueError(f"need 0 <= n_plus <= n_total and n_total >= 1 (n_total={n_total})")
    n_minus = n_total - n_plus
    per_plus, per_minus = thresholded_terms(rates, channel.eta)
    with np.errstate(invalid="ignore"):
        value = (np.where(n_plus > 0, n_plus * per_plus, 0.0)
                 + np.where(n_minus > 0, n_minus * per_minus, 0.0))
    return LogLikelihoodRatio(float(value)) if value.ndim == 0 else value


def decide(lr: float, rng: np.random.Generator) -> int:
    """1 if lr > 0, 0 if lr < 0, fair coin on a tie (or nan)."""
    if lr > 0:
        return 1
    if lr < 0:
        return 0
    return int(rng.integers(0, 2))


def decide_batch(values: np.ndarray, coins: np.ndarray) -> np.ndarray:
    """Vectorized decide() with pre-drawn tie coins."""
    return np.where(values > 0, 1, np.where(values < 0, 0, coins))


def gaussian_majority_error(r: float, n: int) -> float:
    """Majority-vote error for the Gaussian readout; even n ties with n - 1."""
    if not r > 0 or n < 1:
        raise ValueError(f"need r > 0 and n >= 1, got r={r}, n={n}")
    eps = 0.5 * erfc(math.sqrt(r / 2.0))
    m = n if n % 2 else n - 1
    half = (m + 1) / 2.0
    return regularized_incomplete_beta(eps, half, half)


def gaussian_soft_error(r: float, n: int) -> float:
    if not r > 0 or n < 1:
        raise ValueError(f"need r > 0 and n >= 1, got r={r}, n={n}")
    return 0.5 * erfc(math.sqrt(n * r / 2.0))


def asymptotic_majority_error(r: float, n: int) -> float:
    """Large-r form C(N, (N+1)/2) (2 pi r)^-(N+1)/4 exp(-(N+1) r/4), odd N."""
    if not r > 0 or n < 1 or n % 2 == 0:
        raise ValueError(f"need r > 0 and odd n >= 1, got r={r}, n={n}")
    k = (n + 1) // 2
    return math.comb(n, k) * (2.0 * math.pi * r) ** (-k / 2.0) * math.exp(-k * r / 2.0)


def asymptotic_soft_error(r: float, n: int) -> float:
    """Large-r form exp(-N r/2) / sqrt(2 pi N r)."""
    if not r > 0 or n < 1:
        raise ValueError(f"need r > 0 and n >= 1, got r={r}, n={n}")
    return math.exp(-n * r / 2.0) / math.sqrt(2.0 * math.pi * n * r)


def asymptotic_soft_qubit_count(n_c: int, r: float) -> float:
    """Qubits soft decoding needs to match majority vote over n_c qubits."""
    if n_c < 1 or n_c % 2 == 0:
        raise ValueError(f"n_c must be odd and positive, got {n_c}")
    if not r > 0:
        raise ValueError(f"r must be positive, got {r}")
    return (n_c + 1) / 2.0 + (n_c - 1) / 2.0 * math.log(r) / r


def min_qubits_to_reach(error_fn: Callable[[int], float], target: float, n_max: int) -> int:
    """Smallest n in [1, n_max] with error_fn(n) <= target."""
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    for n in range(1, n_max + 1):
        if error_fn(n) <= target:
            return n
    raise NumericalError(f"error rate {target:g} not reached with up to {n_max} qubits")


def estimate_error_rate_mc(
    readout: ReadoutModel,
    mode: Union[DecodingMode, str],
    n: int,
    channel: EncodingChannel,
    trials: int,
    seed: int,
    workers: int = 1,
    threshold: Optional[float] = None,
) -> ErrorRateEstimate:
    """Monte Carlo logical error rate of the n-qubit repetition code.

    Both modes draw identical logical bits, flips and outcomes for a given
    seed, so their rates are directly comparable. The result does not depend
    on `workers`.
    """
    mode = DecodingMode(mode)
    if n < 1 or trials < 1:
        raise ValueError(f"need n >= 1 and trials >= 1, got n={n}, trials={trials}")
    rates = None
    if mode is DecodingMode.THRESHOLDED:
        threshold = readout.optimal_threshold() if threshold is None else threshold
        rates = conditional_error_rates(readout, threshold)
    errors = sum(map_blocks(
        _count_errors,
        trials,
        TRIAL_BLOCK,
        seed,
        workers,
        readout=readout,
        mode=mode,
        n=n,
        eta=channel.eta,
        rates=rates,
    ))
    estimate = ErrorRateEstimate.from_counts(errors, trials)
    logger.debug("%s n=%d eta=%g: %d/%d errors", mode.value, n, channel.eta, errors, trials)
    return estimate


def _count_errors(block, size, seed, *, readout, mode, n, eta, rates) -> int:
    rng = block_rng(seed, block)
    logical = rng.integers(0, 2, size)
    flips = rng.random((size, n)) < eta
    states = np.where(logical[:, None] == 1, State.PLUS, State.MINUS) * np.where(flips, -1, 1)
    outcomes = readout.sample(states, rng)
    if mode is DecodingMode.ANALOG:
        with np.errstate(invalid="ignore"):
            values = analog_terms(readout, outcomes, eta).sum(axis=1)
    else:
        n_plus = np.count_nonzero(outcomes > rates.threshold, axis=1)
        values = log_lr_thresholded(rates, n_plus, n, EncodingChannel(eta))
    coins = rng.integers(0, 2, size)
    return int(np.count_nonzero(decide_batch(values, coins) != logical))
