import pytest

from raceloop.config import default_config
from raceloop.lqr import build_bracket_gains
from raceloop.sim import build_track_line
from raceloop.tracks import build_oval_line


@pytest.fixture(scope="session")
def cfg():
    return default_config()


@pytest.fixture(scope="session")
def oval_line(cfg):
    """Default-config track line (smoothed), shared across modules."""
    return build_track_line(cfg)


@pytest.fixture(scope="session")
def oval_line_raw():
    """Unsmoothed oval fit, for geometry tests that need the interpolation
    contract."""
    return build_oval_line(smoothing_passes=0)


@pytest.fixture(scope="session")
def default_schedule(cfg):
    return build_bracket_gains(cfg.vehicle, [b.to_bracket() for b in cfg.brackets])
