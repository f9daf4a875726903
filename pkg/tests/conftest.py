import contextlib

import numpy as np
import pytest

from ocean3d.grid import Grid3DSpec, LandSeaMask, OceanState, regular_grid
from ocean3d.io.stats import NormStats
from ocean3d.synth import SynthParams, default_mask, gen_dataset

_VERDICTS = []


@pytest.fixture
def verdict():
    """Context manager recording one PASS/FAIL line per acceptance criterion."""

    @contextlib.contextmanager
    def record(number, title):
        info = {}
        try:
            yield info
        except BaseException as exc:
            first = str(exc).splitlines()[0][:160] if str(exc) else ""
            _VERDICTS.append((number, title, "FAIL", f"{type(exc).__name__}: {first}"))
            raise
        _VERDICTS.append((number, title, "PASS", ", ".join(f"{k}={v}" for k, v in info.items())))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, status, detail in sorted(_VERDICTS):
        line = f"AC{number:<2} {status}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def small_spec():
    return regular_grid((0.0, 10.0, 30.0, 60.0), 8, 16, lat_range=(-40.0, 40.0))


@pytest.fixture(scope="session")
def regional_spec():
    """Non-periodic 4 x 6 x 10 grid over a 20 degree longitude window."""
    return Grid3DSpec(4, 4, 6, 10, -12.5, 5.0, 140.0, 2.0, (0.0, 20.0, 50.0, 100.0))


def random_state(spec, rng, time=0, mask=None):
    data = rng.normal(size=spec.shape)
    st = OceanState(spec, time, data)
    return st.masked(mask) if mask is not None else st


def random_mask(spec, rng, p_land=0.2):
    """Column-monotone random bathymetry with some land columns."""
    bottom = rng.integers(-1, spec.n_depth, size=(spec.n_lat, spec.n_lon))
    bottom[rng.random(bottom.shape) > p_land] = spec.n_depth - 1
    k = np.arange(spec.n_depth)[:, None, None]
    return LandSeaMask(spec, k <= bottom[None])


def unit_stats(spec):
    V, D = 4, spec.n_depth
    return NormStats(np.zeros((V, D)), np.ones((V, D)), np.ones((V, D)), np.zeros(8), np.ones(8))


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """40 synthetic days on a 4 x 8 x 16 global grid."""
    spec = regular_grid((0.0, 10.0, 30.0, 60.0), 8, 16, lat_range=(-40.0, 40.0))
    p = SynthParams(spec=spec)
    mask = default_mask(spec)
    out = tmp_path_factory.mktemp("tiny")
    manifest = gen_dataset(p, range(40), mask, str(out))
    return p, mask, manifest, str(out)
