"""Pytest fixtures for softread tests."""
import numpy as np
import pytest

from softread.peak import PeakSignalParams, optimize_peak_parameters, tabulate_peak_distributions
from softread.readout import GaussianReadout, TabulatedReadout


@pytest.fixture
def gaussian():
    """Gaussian readout at r = 2."""
    return GaussianReadout(2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def peak_params():
    """A mid-range peak-signal operating point at r = 2."""
    return PeakSignalParams(mean_turn_on=1.0, mean_duration=4.0, r=2.0,
                            meas_time=6.0, bin_time=0.4)


@pytest.fixture(scope="session")
def peak_readout(peak_params):
    """Small peak-signal tabulation shared by the whole session."""
    return tabulate_peak_distributions(peak_params, n_samples=200_000, grid_size=256, seed=11)


@pytest.fixture(scope="session")
def tabulated_gaussian():
    """The r = 2 Gaussian readout tabulated on a fine grid."""
    model = GaussianReadout(2.0)
    grid = np.linspace(-7.0, 7.0, 2801)
    return TabulatedReadout.from_pdfs(
        grid,
        model.pdf(grid, 1),
        model.pdf(grid, -1),
        params={"kind": "gaussian-table", "r": 2.0},
    )


@pytest.fixture(scope="session")
def calibrated_peak():
    """The r = 2 peak-signal readout calibrated over the default grids (slow)."""
    base = PeakSignalParams(mean_turn_on=1.0, mean_duration=4.0, r=2.0, meas_time=1.0, bin_time=1.0)
    return optimize_peak_parameters(base, n_samples=200_000, grid_size=512, seed=2)


@pytest.fixture
def softread_dir(tmp_path, monkeypatch):
    """Point SOFTREAD_DIR at a temporary directory."""
    path = tmp_path / ".softread"
    monkeypatch.setattr("softread.config.SOFTREAD_DIR", path)
    yield path
