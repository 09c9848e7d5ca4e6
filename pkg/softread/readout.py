"""Readout channels: conditional outcome distributions P(O|+), P(O|-)."""
import json
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .config import N_QUANTILES, NORMALIZATION_TOL, SUPPORT_CUTOFF, TABULATION_VERSION
from .numerics import (
    IntegrationError,
    NumericalError,
    QuadratureSpec,
    integrate,
    normal_cdf,
    normal_log_pdf,
)

logger = logging.getLogger(__name__)

# Cells are split into at most this many sub-cells by TabulatedReadout.integrate
MAX_REFINEMENT = 1024


class State(IntEnum):
    """Physical qubit state; the value is the mean Gaussian outcome."""
    MINUS = -1
    PLUS = 1


class ReadoutFormatError(ValueError):
    """A tabulated readout violates its invariants."""


@dataclass(frozen=True)
class ConditionalErrorRates:
    """Single-shot error rates eps_+ = P(c_-|+), eps_- = P(c_+|-) at threshold nu."""
    eps_plus: float
    eps_minus: float
    threshold: float

    def __post_init__(self):
        for name in ("eps_plus", "eps_minus"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be a probability, got {value}")

    @property
    def average(self) -> float:
        return 0.5 * (self.eps_plus + self.eps_minus)


class ReadoutModel(ABC):
    """A pair of conditional outcome densities with sampling and quadrature."""

    @property
    @abstractmethod
    def name(self) -> str:
        ...

    @abstractmethod
    def log_pdf(self, outcome, state: int):
        """log P(O|state), vectorized over outcome; -inf where the density is 0."""

    def pdf(self, outcome, state: int):
        return np.exp(self.log_pdf(outcome, state))

    @abstractmethod
    def cdf(self, outcome, state: int):
        """P(O' <= outcome | state)."""

    def upper_tail(self, outcome, state: int):
        """P(O' > outcome | state)."""
        return 1.0 - self.cdf(outcome, state)

    @abstractmethod
    def support(self) -> tuple[float, float]:
        """Finite interval holding all but a negligible share of both densities."""

    @abstractmethod
    def sample(self, state, rng: np.random.Generator, size=None):
        """Draw outcomes; `state` may be an array of +1/-1 values."""

    @abstractmethod
    def integrate(self, g: Callable, spec: Optional[QuadratureSpec] = None) -> float:
        """Integrate a vectorized function of the outcome over the support."""

    @abstractmethod
    def optimal_threshold(self) -> float:
        ...

    def mixture_pdf(self, outcome, s0: float):
        """P(O|s0) = (1+s0)/2 P(O|+) + (1-s0)/2 P(O|-)."""
        return (0.5 * (1.0 + s0) * self.pdf(outcome, State.PLUS)
                + 0.5 * (1.0 - s0) * self.pdf(outcome, State.MINUS))

    def expectation(self, g: Callable, state: int, spec: Optional[QuadratureSpec] = None) -> float:
        """Conditional expectation of g(O) given the state."""
        return self.integrate(lambda o: g(o) * self.pdf(o, state), spec)


@dataclass(frozen=True)
class GaussianReadout(ReadoutModel):
    """Gaussian readout: means +/-1, variance 1/r."""
    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"signal-to-noise ratio must be positive, got {self.r}")

    @property
    def name(self) -> str:
        return "gaussian"

    @property
    def sigma(self) -> float:
        return 1.0 / math.sqrt(self.r)

    def log_pdf(self, outcome, state: int):
        return normal_log_pdf(outcome, float(state), 1.0 / self.r)

    def cdf(self, outcome, state: int):
        return normal_cdf((np.asarray(outcome, dtype=float) - state) * math.sqrt(self.r))

    def upper_tail(self, outcome, state: int):
        return normal_cdf((state - np.asarray(outcome, dtype=float)) * math.sqrt(self.r))

    def support(self) -> tuple[float, float]:
        half_width = math.sqrt(2.0 * math.log(1.0 / SUPPORT_CUTOFF) / self.r)
        return -1.0 - half_width, 1.0 + half_width

    def sample(self, state, rng: np.random.Generator, size=None):
        return rng.normal(loc=np.asarray(state, dtype=float), scale=self.sigma, size=size)

    def integrate(self, g: Callable, spec: Optional[QuadratureSpec] = None) -> float:
        lower, upper = self.support()
        return integrate(lambda o: float(g(o)), lower, upper, spec, points=(-1.0, 0.0, 1.0))

    def optimal_threshold(self) -> float:
        return 0.0


@dataclass(frozen=True, eq=False)
class TabulatedReadout(ReadoutModel):
    """Densities tabulated on a grid, with cdf and inverse-cdf tables for sampling.

    Densities are linear between grid nodes and zero outside the grid. The
    inverse-cdf tables live on a uniform probability grid.
    """
    grid: np.ndarray
    pdf_plus: np.ndarray
    pdf_minus: np.ndarray
    cdf_plus: np.ndarray
    cdf_minus: np.ndarray
    inv_cdf_plus: np.ndarray
    inv_cdf_minus: np.ndarray
    params: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("grid", "pdf_plus", "pdf_minus", "cdf_plus", "cdf_minus",
                     "inv_cdf_plus", "inv_cdf_minus"):
            array = np.array(getattr(self, name), dtype=float)
            array.setflags(write=False)
            object.__setattr__(self, name, array)
        self._validate()

    def _validate(self):
        grid = self.grid
        if grid.ndim != 1 or grid.size < 2:
            raise ReadoutFormatError("grid needs at least two points")
        if not np.all(np.isfinite(grid)) or not np.all(np.diff(grid) > 0):
            raise ReadoutFormatError("grid must be finite and strictly increasing")
        for label in ("plus", "minus"):
            pdf = getattr(self, f"pdf_{label}")
            cdf = getattr(self, f"cdf_{label}")
            inv = getattr(self, f"inv_cdf_{label}")
            if pdf.shape != grid.shape or cdf.shape != grid.shape:
                raise ReadoutFormatError(f"pdf_{label}/cdf_{label} do not match the grid")
            if not np.all(np.isfinite(pdf)) or np.any(pdf < 0):
                raise ReadoutFormatError(f"pdf_{label} must be finite and non-negative")
            mass = trapezoid(pdf, grid)
            if abs(mass - 1.0) > NORMALIZATION_TOL:
                raise ReadoutFormatError(f"pdf_{label} integrates to {mass!r}, not 1")
            if np.any(np.diff(cdf) < 0) or abs(cdf[0]) > NORMALIZATION_TOL \
                    or abs(cdf[-1] - 1.0) > NORMALIZATION_TOL:
                raise ReadoutFormatError(f"cdf_{label} must rise monotonically from 0 to 1")
            if inv.ndim != 1 or inv.size < 2 or np.any(np.diff(inv) < 0):
                raise ReadoutFormatError(f"inv_cdf_{label} must be non-decreasing")

    @classmethod
    def from_pdfs(
        cls,
        grid,
        pdf_plus,
        pdf_minus,
        *,
        normalize: bool = True,
        n_quantiles: int = N_QUANTILES,
        params: Optional[dict] = None,
        provenance: Optional[dict] = None,
    ) -> "TabulatedReadout":
        """Build cdf and inverse-cdf tables from a pair of densities on a grid."""
        grid = np.asarray(grid, dtype=float)
        tables = {}
        for label, pdf in (("plus", pdf_plus), ("minus", pdf_minus)):
            pdf = np.asarray(pdf, dtype=float)
            if pdf.shape != grid.shape or grid.ndim != 1 or grid.size < 2:
                raise ReadoutFormatError(f"pdf_{label} does not match a grid of {grid.size} points")
            if normalize:
                mass = trapezoid(pdf, grid)
                if not mass > 0:
                    raise ReadoutFormatError(f"pdf_{label} has no weight")
                pdf = pdf / mass
            cdf = cumulative_trapezoid(pdf, grid, initial=0.0)
            if cdf[-1] > 0:
                cdf = cdf / cdf[-1]
            cdf = np.maximum.accumulate(cdf)
            tables[f"pdf_{label}"] = pdf
            tables[f"cdf_{label}"] = cdf
            tables[f"inv_cdf_{label}"] = _inverse_cdf(grid, cdf, n_quantiles)
        return cls(
            grid=grid,
            params=dict(params or {}),
            provenance=dict(provenance or {}),
            **tables,
        )

    @property
    def name(self) -> str:
        return str(self.params.get("kind", "tabulated"))

    @property
    def quantiles(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.inv_cdf_plus.size)

    @property
    def warnings(self) -> list[str]:
        return list(self.provenance.get("warnings", []))

    def _tables(self, state: int):
        if state > 0:
            return self.pdf_plus, self.cdf_plus, self.inv_cdf_plus
        return self.pdf_minus, self.cdf_minus, self.inv_cdf_minus

    def pdf(self, outcome, state: int):
        pdf, _, _ = self._tables(state)
        return np.interp(outcome, self.grid, pdf, left=0.0, right=0.0)

    def log_pdf(self, outcome, state: int):
        with np.errstate(divide="ignore"):
            return np.log(self.pdf(outcome, state))

    def cdf(self, outcome, state: int):
        """Exact integral of the piecewise-linear density up to `outcome`."""
        pdf, cdf, _ = self._tables(state)
        x = np.asarray(outcome, dtype=float)
        grid = self.grid
        j = np.clip(np.searchsorted(grid, x, side="right") - 1, 0, grid.size - 2)
        d = x - grid[j]
        h = grid[j + 1] - grid[j]
        inside = cdf[j] + pdf[j] * d + 0.5 * (pdf[j + 1] - pdf[j]) * d * d / h
        value = np.where(x < grid[0], 0.0, np.where(x >= grid[-1], 1.0, np.clip(inside, 0.0, 1.0)))
        return float(value) if value.ndim == 0 else value

    def inverse_cdf(self, u, state: int):
        """Q^-1(u): linear interpolation of the inverse-cdf table."""
        _, _, inv = self._tables(state)
        return np.interp(u, self.quantiles, inv)

    def support(self) -> tuple[float, float]:
        return float(self.grid[0]), float(self.grid[-1])

    def sample(self, state, rng: np.random.Generator, size=None):
        states = np.asarray(state)
        shape = size if size is not None else states.shape
        u = rng.random(shape)
        outcomes = np.where(
            states > 0,
            self.inverse_cdf(u, State.PLUS),
            self.inverse_cdf(u, State.MINUS),
        )
        return float(outcomes) if outcomes.ndim == 0 else outcomes

    def integrate(self, g: Callable, spec: Optional[QuadratureSpec] = None) -> float:
        """Trapezoid refinement of every grid cell with Richardson extrapolation.

        The densities only have kinks on grid nodes, so each refinement level
        keeps them on sub-cell boundaries. Stops when two extrapolated levels
        agree within the tolerance, scaled by the integral of |g|.
        """
        spec = spec or QuadratureSpec()
        widths = np.diff(self.grid)
        previous_trapezoid = None
        previous_estimate = None
        k = 1
        while k <= MAX_REFINEMENT:
            offsets = np.arange(k) / k
            x = np.append((self.grid[:-1, None] + widths[:, None] * offsets).ravel(),
                          self.grid[-1])
            y = np.asarray(g(x), dtype=float)
            current = trapezoid(y, x)
            scale = trapezoid(np.abs(y), x)
            if previous_trapezoid is not None:
                estimate = (4.0 * current - previous_trapezoid) / 3.0
                if previous_estimate is not None:
                    tolerance = max(spec.absolute_tolerance, spec.relative_tolerance * scale)
                    if abs(estimate - previous_estimate) <= tolerance:
                        return float(estimate)
                previous_estimate = estimate
            previous_trapezoid = current
            k *= 2
        raise IntegrationError(
            "grid refinement did not converge",
            float(previous_estimate),
            float(abs(previous_estimate - previous_trapezoid)),
        )

    def optimal_threshold(self) -> float:
        """Threshold minimising (eps_+ + eps_-)/2, i.e. where the densities cross.

        The scan picks the best grid node; the P(O|+) = P(O|-) crossing in an
        adjacent cell is then located by linear interpolation.
        """
        average_error = 0.5 * (self.cdf_plus + 1.0 - self.cdf_minus)
        k = int(np.argmin(average_error))
        if k == 0 or k == self.grid.size - 1:
            raise NumericalError(
                "no P(O|+) = P(O|-) crossing inside the tabulated grid "
                f"(minimum average error {average_error[k]:.4g} at grid edge {self.grid[k]:.4g})"
            )
        diff = self.pdf_plus - self.pdf_minus
        for j in (k - 1, k):
            lo, hi = diff[j], diff[j + 1]
            if lo < 0.0 <= hi:
                return float(self.grid[j] - lo * (self.grid[j + 1] - self.grid[j]) / (hi - lo))
        return float(self.grid[k])

    def to_json(self) -> str:
        doc = {
            "version": TABULATION_VERSION,
            "grid": self.grid.tolist(),
            "pdf_plus": self.pdf_plus.tolist(),
            "pdf_minus": self.pdf_minus.tolist(),
            "params": self.params,
            "provenance": self.provenance,
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, data: str) -> "TabulatedReadout":
        try:
            doc = json.loads(data)
        except json.JSONDecodeError as e:
            raise ReadoutFormatError(f"not a JSON document: {e}") from e
        if not isinstance(doc, dict):
            raise ReadoutFormatError("tabulation must be a JSON object")
        if doc.get("version") != TABULATION_VERSION:
            raise ReadoutFormatError(f"unsupported tabulation version {doc.get('version')!r}")
        missing = [k for k in ("grid", "pdf_plus", "pdf_minus") if k not in doc]
        if missing:
            raise ReadoutFormatError(f"missing keys: {', '.join(missing)}")
        try:
            # Stored densities must already be normalized
            return cls.from_pdfs(
                doc["grid"],
                doc["pdf_plus"],
                doc["pdf_minus"],
                normalize=False,
                params=doc.get("params", {}),
                provenance=doc.get("provenance", {}),
            )
        except ReadoutFormatError:
            raise
        except (TypeError, ValueError) as e:
            raise ReadoutFormatError(f"malformed tabulation arrays: {e}") from e

    def save(self, path: Path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json())

    @classmethod
    def load(cls, path: Path) -> "TabulatedReadout":
        return cls.from_json(Path(path).read_text())


def _inverse_cdf(grid: np.ndarray, cdf: np.ndarray, n_quantiles: int) -> np.ndarray:
    # Restrict to the active range so u = 0 and u = 1 map onto the support edges
    first = max(int(np.searchsorted(cdf, 0.0, side="right")) - 1, 0)
    last = min(int(np.searchsorted(cdf, 1.0, side="left")), cdf.size - 1)
    u = np.linspace(0.0, 1.0, n_quantiles)
    return np.interp(u, cdf[first:last + 1], grid[first:last + 1])


def gaussian_pdf(model: GaussianReadout, outcome, state: int):
    """sqrt(r/2pi) exp(-(O -/+ 1)^2 r/2)."""
    return model.pdf(outcome, state)


def optimal_threshold(readout: ReadoutModel) -> float:
    """Threshold minimising the average single-shot error."""
    return readout.optimal_threshold()


def conditional_error_rates(readout: ReadoutModel, threshold: float) -> ConditionalErrorRates:
    """eps_+ = P(O < nu | +), eps_- = P(O > nu | -)."""
    return ConditionalErrorRates(
        eps_plus=float(readout.cdf(threshold, State.PLUS)),
        eps_minus=float(readout.upper_tail(threshold, State.MINUS)),
        threshold=float(threshold),
    )


def sample_outcome(readout: ReadoutModel, state, rng: np.random.Generator, size=None):
    """Draw outcome(s) for the given state(s)."""
    return readout.sample(state, rng, size)
