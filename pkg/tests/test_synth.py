import dataclasses
import hashlib
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ocean3d.errors import DegenerateGrid
from ocean3d.grid import FORCING_VARS, LandSeaMask, regular_grid
from ocean3d.io.ogf import read_ogf
from ocean3d.synth import (MSL_BASELINE, SynthParams, analytic_fields, analytic_forcing, analytic_state,
                           default_mask, desk_grid, gen_dataset, horizontal_divergence, splitmix64,
                           surface_currents)

SPEC = regular_grid((0.0, 10.0, 30.0, 60.0, 150.0), 8, 16, lat_range=(-40.0, 40.0))


def params(**kw):
    return SynthParams(spec=SPEC, **kw)


def test_static_without_anomaly_or_flow():
    p = params(anomaly_amp=0.0, psi0=0.0)
    a, b = analytic_fields(p, 0), analytic_fields(p, 37.5)
    assert np.array_equal(a, b)
    assert np.all(a == a[..., :1])


def test_deep_limit_is_deep_temperature():
    deep = regular_grid((0.0, 5000.0, 20000.0), 4, 16)
    p = SynthParams(spec=deep)
    np.testing.assert_allclose(analytic_fields(p, 3)[0, -1], p.t_deep, atol=1e-12)


def test_anomaly_periodicity():
    p = params()
    period = p.wavelength / p.phase_speed
    assert period == pytest.approx(100.0)
    np.testing.assert_allclose(analytic_fields(p, 12.0), analytic_fields(p, 12.0 + period), atol=1e-9, rtol=1e-12)
    np.testing.assert_allclose(analytic_forcing(p, 5).data, analytic_forcing(p, 105).data, rtol=1e-12, atol=1e-6)


def test_zero_forcing_amplitudes():
    f = analytic_forcing(params(forcing_amp=(0.0,) * 8), 4).data
    assert f.shape == (len(FORCING_VARS), 8, 16) == (8, 8, 16)
    assert np.all(f[[0, 1, 2, 3, 5, 6, 7]] == 0.0)
    assert np.all(f[4] == MSL_BASELINE)


def test_param_validation():
    with pytest.raises(DegenerateGrid):
        params(delta=0.0)
    with pytest.raises(DegenerateGrid):
        params(wavelength=1000.0)
    with pytest.raises(DegenerateGrid):
        params(anomaly_amp=math.nan)


def test_divergence_free_currents():
    p = params()
    for t in (0, 17, 63):
        u, v = surface_currents(p, t)
        div = horizontal_divergence(u, v, SPEC)
        scale = np.abs(u).max() / (6.371e6 * math.radians(SPEC.d_lat))
        assert np.abs(div).max() < 1e-12 * scale


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 35.0), st.floats(-2.0, 10.0), st.floats(20.0, 300.0), st.floats(1.0, 80.0))
def test_stable_stratification_without_anomaly(t_surf, t_deep, z_th, delta):
    p = params(anomaly_amp=0.0, t_surf=t_surf, t_deep=t_deep, z_th=z_th, delta=delta)
    spec = p.spec
    thetao = analytic_fields(p, 0)[0]
    cos2 = np.cos(np.deg2rad(spec.lats)) ** 2
    warm = (t_surf * cos2 >= t_deep)[None, :, None]
    d = np.diff(thetao, axis=0)
    assert np.all(np.where(warm, d <= 1e-12, d >= -1e-12))


def test_daily_increment_bound():
    p = params(psi0=0.0)
    bound = p.anomaly_amp * 2 * math.pi * p.phase_speed / p.wavelength
    for t in (0, 25, 50):
        d = analytic_fields(p, t + 1) - analytic_fields(p, t)
        assert np.abs(d[0]).max() <= bound + 1e-12


def test_splitmix64_reference():
    # published reference values for seed 0
    assert splitmix64(0, 3).tolist() == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def test_noise_is_deterministic():
    p = params(noise_amp=0.01, seed=7)
    a, b = analytic_state(p, 3).data, analytic_state(p, 3).data
    assert np.array_equal(a, b)
    assert 0 < np.abs(a - analytic_fields(p, 3)).max() <= 0.01


def _digest(root):
    h = hashlib.sha256()
    for dirpath, _, files in sorted(os.walk(root)):
        for name in sorted(files):
            path = os.path.join(dirpath, name)
            h.update(os.path.relpath(path, root).encode())
            if name != "manifest.txt":
                with open(path, "rb") as fh:
                    h.update(fh.read())
    return h.hexdigest()


def test_gen_dataset(tmp_path):
    p = params()
    mask = default_mask(SPEC)
    m = gen_dataset(p, range(30), mask, str(tmp_path / "a"))
    assert len(m) == 30 and list(m.days) == list(range(30))
    assert len(os.listdir(tmp_path / "a" / "ocean")) == 30
    assert len(os.listdir(tmp_path / "a" / "forcing")) == 30
    gen_dataset(p, range(30), mask, str(tmp_path / "b"))
    assert _digest(tmp_path / "a") == _digest(tmp_path / "b")
    back = read_ogf(m.ocean_path(11))
    ref = analytic_state(p, 11).masked(mask).data
    np.testing.assert_array_equal(np.isnan(back.data), np.isnan(ref))
    ocean = mask.data[None].repeat(4, 0)
    np.testing.assert_allclose(back.data[ocean], ref[ocean], rtol=1e-6, atol=1e-6 * np.abs(ref[ocean]).max())
    assert isinstance(read_ogf(str(tmp_path / "a" / "mask.ogf")), LandSeaMask)


def test_default_mask_and_desk_grid():
    spec = desk_grid()
    assert spec.shape == (4, 8, 32, 64)
    mask = default_mask(spec)
    assert 0 < mask.data[0].mean() < 1
    # ocean at a level implies ocean above it
    assert np.all(mask.data[1:] <= mask.data[:-1])


def test_params_are_frozen():
    with pytest.raises(dataclasses.FrozenInstanceError):
        params().seed = 3
