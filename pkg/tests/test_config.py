"""Tests for configuration."""
import numpy as np

from softread import config
from softread.config import ensure_softread_dir, tabulation_dir


class TestEnsureSoftreadDir:
    """Tests for ensure_softread_dir."""

    def test_creates_directories(self, softread_dir):
        assert not softread_dir.exists()
        ensure_softread_dir()
        assert softread_dir.is_dir()
        assert (softread_dir / "tabulations").is_dir()

    def test_idempotent(self, softread_dir):
        ensure_softread_dir()
        ensure_softread_dir()  # Should not raise
        assert softread_dir.exists()


class TestTabulationDir:
    """Tests for tabulation_dir."""

    def test_follows_softread_dir(self, softread_dir):
        assert tabulation_dir() == softread_dir / "tabulations"


class TestDefaults:
    """Tests for the default calibration grids."""

    def test_meas_times(self):
        assert config.DEFAULT_MEAS_TIMES == (2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0, 20.0)

    def test_bin_times_geometric(self):
        times = np.array(config.DEFAULT_BIN_TIMES)
        assert times[0] == 0.05
        assert np.isclose(times[-1], 2.0)
        ratios = times[1:] / times[:-1]
        assert np.allclose(ratios, ratios[0])
