"""Estimators of the expectation value s0 = <sigma_z> from N readouts.

Three estimators are compared: the bias-corrected thresholded average (TA),
the rescaled soft average (SA) and the maximum-likelihood soft-decoded
estimate (SD). Asymptotic MSEs come from quadrature over the readout
densities; the Monte Carlo harness checks them on simulated records.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import NewType, Optional, Union

import numpy as np

from .config import DEFAULT_CONCAVE_TOL, RECORD_BLOCK
from .numerics import QuadratureSpec, maximize_concave
from .readout import ConditionalErrorRates, ReadoutModel, State, conditional_error_rates
from .repcode import MeasurementRecord
from .streams import block_rng, map_blocks

logger = logging.getLogger(__name__)

ExpectationValue = NewType("ExpectationValue", float)

# |A| below this counts as indistinguishable means
MIN_SCALE = 1e-12


class Method(str, Enum):
    TA = "TA"
    SA = "SA"
    SD = "SD"


class UninformativeReadoutError(ValueError):
    """The readout carries no information about the state for this estimator."""


def check_expectation(s0: float, *, interior: bool = False) -> ExpectationValue:
    if interior and not -1.0 < s0 < 1.0:
        raise ValueError(f"s0 must lie in (-1, 1), got {s0}")
    if not -1.0 <= s0 <= 1.0:
        raise ValueError(f"s0 must lie in [-1, 1], got {s0}")
    return ExpectationValue(float(s0))


@dataclass(frozen=True)
class MixtureDistribution:
    """Outcome distribution of a qubit with expectation value s0."""
    readout: ReadoutModel
    s0: float

    def __post_init__(self):
        check_expectation(self.s0)

    @property
    def p_plus(self) -> float:
        return 0.5 * (1.0 + self.s0)

    def pdf(self, outcome):
        return self.readout.mixture_pdf(outcome, self.s0)

    def sample(self, size, rng: np.random.Generator):
        """Collapse each qubit to +/- with probabilities (1 +/- s0)/2, then read out."""
        states = np.where(rng.random(size) < self.p_plus, State.PLUS, State.MINUS)
        return self.readout.sample(states, rng)


@dataclass(frozen=True)
class MseReport:
    method: Method
    n_per_record: int
    n_records: int
    variance: float
    bias: float
    mse: float
    normalized_mse: float
    clamped: int = 0
    failures: int = 0

    @classmethod
    def from_estimates(cls, method: Method, estimates: np.ndarray, s0: float,
                       n_per_record: int, failures: int = 0) -> "MseReport":
        """MSE of the estimates about s0; nan entries are failed records."""
        valid = estimates[np.isfinite(estimates)]
        if valid.size == 0:
            nan = float("nan")
            return cls(method, n_per_record, estimates.size, nan, nan, nan, nan, 0, failures)
        variance = float(np.var(valid))
        bias = float(np.mean(valid) - s0)
        mse = variance + bias * bias
        return cls(
            method=method,
            n_per_record=n_per_record,
            n_records=int(estimates.size),
            variance=variance,
            bias=bias,
            mse=mse,
            normalized_mse=n_per_record * mse,
            clamped=int(np.count_nonzero(np.abs(valid) >= 1.0)),
            failures=failures,
        )


def _outcomes(record: Union[MeasurementRecord, np.ndarray]) -> np.ndarray:
    if isinstance(record, MeasurementRecord):
        return record.outcomes
    return MeasurementRecord(record).outcomes


def bias_corrected_outcomes(rates: ConditionalErrorRates) -> tuple[float, float]:
    """Values c_+, c_- that make the thresholded average unbiased."""
    total = rates.eps_plus + rates.eps_minus
    if total >= 1.0:
        raise UninformativeReadoutError(
            f"eps_+ + eps_- = {total:.6g} >= 1: thresholded outcomes carry no information"
        )
    skew = rates.eps_plus - rates.eps_minus
    return (1.0 + skew) / (1.0 - total), -(1.0 - skew) / (1.0 - total)


def thresholded_average(
    record,
    readout: ReadoutModel,
    threshold: float,
    *,
    clamp: bool = True,
) -> ExpectationValue:
    outcomes = _outcomes(record)
    c_plus, c_minus = bias_corrected_outcomes(conditional_error_rates(readout, threshold))
    n_plus = int(np.count_nonzero(outcomes > threshold))
    estimate = (n_plus * c_plus + (outcomes.size - n_plus) * c_minus) / outcomes.size
    return ExpectationValue(float(np.clip(estimate, -1.0, 1.0)) if clamp else float(estimate))


def scaling_coefficients(readout: ReadoutModel, spec: Optional[QuadratureSpec] = None) -> tuple[float, float]:
    """A = (<O>_+ - <O>_-)/2 and B = (<O>_+ + <O>_-)/2."""
    mean_plus = readout.expectation(lambda o: o, State.PLUS, spec)
    mean_minus = readout.expectation(lambda o: o, State.MINUS, spec)
    a = 0.5 * (mean_plus - mean_minus)
    if abs(a) < MIN_SCALE:
        raise UninformativeReadoutError("conditional means coincide: soft average is undefined")
    return a, 0.5 * (mean_plus + mean_minus)


def soft_average(
    record,
    readout: ReadoutModel,
    *,
    clamp: bool = True,
    coefficients: Optional[tuple[float, float]] = None,
) -> ExpectationValue:
    """mean((O_i - B) / A)."""
    outcomes = _outcomes(record)
    a, b = coefficients or scaling_coefficients(readout)
    estimate = (float(np.mean(outcomes)) - b) / a
    return ExpectationValue(float(np.clip(estimate, -1.0, 1.0)) if clamp else estimate)


def scaled_densities(readout: ReadoutModel, outcomes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """P(O|+), P(O|-) divided by their larger value; both 0 where both vanish."""
    log_plus = readout.log_pdf(outcomes, State.PLUS)
    log_minus = readout.log_pdf(outcomes, State.MINUS)
    top = np.maximum(log_plus, log_minus)
    alive = np.isfinite(top)
    shift = np.where(alive, top, 0.0)
    return (np.where(alive, np.exp(log_plus - shift), 0.0),
            np.where(alive, np.exp(log_minus - shift), 0.0))


def _score_rows(a: np.ndarray, b: np.ndarray, s) -> np.ndarray:
    s = np.asarray(s, dtype=float)[..., None]
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.mean((a - b) / ((1.0 + s) * a + (1.0 - s) * b), axis=-1)


def log_likelihood(record, readout: ReadoutModel, s: float) -> float:
    """N^-1 sum_i ln[(1+s)/2 P(O_i|+) + (1-s)/2 P(O_i|-)]."""
    outcomes = _outcomes(record)
    log_plus = readout.log_pdf(outcomes, State.PLUS)
    log_minus = readout.log_pdf(outcomes, State.MINUS)
    with np.errstate(divide="ignore"):
        terms = np.logaddexp(np.log(0.5 * (1.0 + s)) + log_plus,
                             np.log(0.5 * (1.0 - s)) + log_minus)
    return float(np.mean(terms))


def score(record, readout: ReadoutModel, s: float) -> float:
    """dl/ds = N^-1 sum_i (P_+ - P_-) / ((1+s) P_+ + (1-s) P_-)."""
    a, b = scaled_densities(readout, _outcomes(record))
    return float(_score_rows(a, b, s))


def log_likelihood_curvature(record, readout: ReadoutModel, s: float) -> float:
    """d^2 l/ds^2, negative wherever the record is informative."""
    a, b = scaled_densities(readout, _outcomes(record))
    with np.errstate(divide="ignore", invalid="ignore"):
        return float(-np.mean(((a - b) / ((1.0 + s) * a + (1.0 - s) * b)) ** 2))


def mle_soft_decoded(record, readout: ReadoutModel, tol: float = DEFAULT_CONCAVE_TOL) -> ExpectationValue:
    """Maximizer of the mixture log-likelihood over s in [-1, 1]."""
    outcomes = _outcomes(record)
    a, b = scaled_densities(readout, outcomes)
    if np.any(a + b == 0.0):
        raise ValueError("record contains outcomes outside both readout densities")
    if not np.any(a > 0.0) or not np.any(b > 0.0):
        logger.warning("degenerate record: every outcome excludes one state")
        return ExpectationValue(1.0 if np.any(a > 0.0) else -1.0)
    s, _ = maximize_concave(
        lambda s: log_likelihood(outcomes, readout, s),
        -1.0,
        1.0,
        tol,
        derivative=lambda s: float(_score_rows(a, b, s)),
    )
    return ExpectationValue(float(np.clip(s, -1.0, 1.0)))


def overlap_integral(readout: ReadoutModel, s0: float, spec: Optional[QuadratureSpec] = None) -> float:
    """I = integral of P(O|+) P(O|-) / P(O|s0)."""
    s0 = check_expectation(s0, interior=True)

    def integrand(o):
        p = readout.pdf(o, State.PLUS)
        q = readout.pdf(o, State.MINUS)
        mix = 0.5 * (1.0 + s0) * p + 0.5 * (1.0 - s0) * q
        return np.where(mix > 0.0, p * q / np.where(mix > 0.0, mix, 1.0), 0.0)

    return readout.integrate(integrand, spec)


def fisher_information(
    readout: ReadoutModel,
    s0: float,
    form: str = "overlap",
    spec: Optional[QuadratureSpec] = None,
) -> float:
    """Fisher information of one outcome about s0.

    form="overlap" uses (1 - I)/(1 - s0^2); form="score" integrates the
    squared score, (P_+ - P_-)^2 / (4 P(O|s0)).
    """
    s0 = check_expectation(s0, interior=True)
    if form == "overlap":
        return (1.0 - overlap_integral(readout, s0, spec)) / (1.0 - s0 * s0)
    if form != "score":
        raise ValueError(f"unknown Fisher information form {form!r}")

    def integrand(o):
        p = readout.pdf(o, State.PLUS)
        q = readout.pdf(o, State.MINUS)
        mix = 0.5 * (1.0 + s0) * p + 0.5 * (1.0 - s0) * q
        return np.where(mix > 0.0, 0.25 * (p - q) ** 2 / np.where(mix > 0.0, mix, 1.0), 0.0)

    return readout.integrate(integrand, spec)


def asymptotic_mse(
    readout: ReadoutModel,
    s0: float,
    method: Union[Method, str],
    threshold: Optional[float] = None,
    spec: Optional[QuadratureSpec] = None,
) -> float:
    """Large-N normalized MSE N * zeta of the chosen estimator."""
    method = Method(method)
    s0 = check_expectation(s0, interior=method is Method.SD)
    if method is Method.TA:
        threshold = readout.optimal_threshold() if threshold is None else threshold
        rates = conditional_error_rates(readout, threshold)
        c_plus, c_minus = bias_corrected_outcomes(rates)
        p_plus = 0.5 * (1.0 + s0) * (1.0 - rates.eps_plus) + 0.5 * (1.0 - s0) * rates.eps_minus
        return p_plus * c_plus ** 2 + (1.0 - p_plus) * c_minus ** 2 - s0 * s0
    if method is Method.SA:
        a, b = scaling_coefficients(readout, spec)
        second = (0.5 * (1.0 + s0) * readout.expectation(lambda o: o * o, State.PLUS, spec)
                  + 0.5 * (1.0 - s0) * readout.expectation(lambda o: o * o, State.MINUS, spec))
        return (second - (a * s0 + b) ** 2) / (a * a)
    information = 1.0 - overlap_integral(readout, s0, spec)
    if information <= MIN_SCALE:
        raise UninformativeReadoutError("overlap integral is 1: identical conditional densities")
    return (1.0 - s0 * s0) / information


def mse_monte_carlo(
    readout: ReadoutModel,
    s0: float,
    method: Union[Method, str],
    n_per_record: int,
    n_records: int,
    seed: int,
    workers: int = 1,
    threshold: Optional[float] = None,
) -> MseReport:
    """Simulated MSE of an estimator over n_records records of n_per_record qubits.

    Records are drawn from P(O|s0) in blocks with their own random streams,
    so all three methods see the same records for a given seed and the
    result does not depend on `workers`.
    """
    method = Method(method)
    s0 = check_expectation(s0)
    if n_per_record < 1 or n_records < 1:
        raise ValueError("n_per_record and n_records must be >= 1")

    constants: dict = {}
    if method is Method.TA:
        threshold = readout.optimal_threshold() if threshold is None else threshold
        constants["threshold"] = threshold
        constants["outcomes"] = bias_corrected_outcomes(conditional_error_rates(readout, threshold))
    elif method is Method.SA:
        constants["coefficients"] = scaling_coefficients(readout)

    blocks = list(map_blocks(
        _estimate_block,
        n_records,
        RECORD_BLOCK,
        seed,
        workers,
        mixture=MixtureDistribution(readout, s0),
        method=method,
        n=n_per_record,
        constants=constants,
    ))
    estimates = np.concatenate(blocks)
    failures = int(np.count_nonzero(~np.isfinite(estimates)))
    if failures:
        logger.warning("%s: %d of %d records could not be decoded", method.value, failures, n_records)
    return MseReport.from_estimates(method, estimates, s0, n_per_record, failures)


def _estimate_block(block, size, seed, *, mixture, method, n, constants) -> np.ndarray:
    rng = block_rng(seed, block)
    outcomes = mixture.sample((size, n), rng)
    if method is Method.TA:
        c_plus, c_minus = constants["outcomes"]
        n_plus = np.count_nonzero(outcomes > constants["threshold"], axis=1)
        estimates = (n_plus * c_plus + (n - n_plus) * c_minus) / n
    elif method is Method.SA:
        a, b = constants["coefficients"]
        estimates = (outcomes.mean(axis=1) - b) / a
    else:
        return _bisect_scores(*scaled_densities(mixture.readout, outcomes))
    return np.clip(estimates, -1.0, 1.0)


def _bisect_scores(a: np.ndarray, b: np.ndarray, tol: float = DEFAULT_CONCAVE_TOL) -> np.ndarray:
    """Row-wise maximum-likelihood estimates by bisection on the score.

    Rows with an outcome outside both densities come back as nan.
    """
    failed = np.any(a + b == 0.0, axis=1)
    a = np.where(failed[:, None], 1.0, a)
    b = np.where(failed[:, None], 1.0, b)
    lower = -np.ones(a.shape[0])
    upper = np.ones(a.shape[0])
    at_lower = ~(_score_rows(a, b, lower) > 0.0)
    at_upper = ~at_lower & ~(_score_rows(a, b, upper) < 0.0)
    for _ in range(math.ceil(math.log2(2.0 / tol))):
        mid = 0.5 * (lower + upper)
        rising = _score_rows(a, b, mid) > 0.0
        lower = np.where(rising, mid, lower)
        upper = np.where(rising, upper, mid)
    estimates = np.where(at_lower, -1.0, np.where(at_upper, 1.0, 0.5 * (lower + upper)))
    return np.where(failed, np.nan, estimates)
