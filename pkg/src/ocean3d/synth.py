"""Synthetic daily ocean and forcing data with closed-form truth.

The ocean state is an analytic thermocline, a zonally propagating anomaly
that decays with depth, and currents derived from a streamfunction (a
stationary gyre pattern plus an eddy train moving with the anomaly). All
fields are deterministic in (params, day).
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGrid
from .grid import EARTH_RADIUS, FORCING_VARS, ForcingState, LandSeaMask, OceanState, regular_grid
from .io.manifest import DatasetManifest, ManifestEntry, write_manifest
from .io.ogf import write_ogf

DESK_DEPTHS = (0.0, 10.0, 30.0, 60.0, 100.0, 180.0, 350.0, 643.0)
MSL_BASELINE = 101_325.0

DEFAULT_WAVELENGTH = 2 * math.pi * EARTH_RADIUS / 4
# u10, v10, t2m, d2m, msl, ssr, strd, mtp
DEFAULT_FORCING_AMP = (6.0, 6.0, 300.0, 300.0, 500.0, 1.5e7, 3.0e7, 3.0e-3)


def desk_grid():
    """4 variables x 8 depths x 32 latitudes x 64 longitudes, rows in [-60, 60]."""
    return regular_grid(DESK_DEPTHS, 32, 64, lat_range=(-60.0, 60.0))


@dataclass(frozen=True)
class SynthParams:
    spec: object = field(default_factory=desk_grid)
    t_surf: float = 28.0  # degC, scaled by cos^2(lat)
    t_deep: float = 4.0
    z_th: float = 100.0  # thermocline depth, m
    delta: float = 25.0  # thermocline width, m
    anomaly_amp: float = 2.0  # degC
    wavelength: float = DEFAULT_WAVELENGTH  # m of equatorial arc
    phase_speed: float = DEFAULT_WAVELENGTH / 100  # m/day
    psi0: float = 1.0e6  # m^2/s
    gyre_wavenumber: int = 2
    eddy_fraction: float = 0.5
    s_deep: float = 34.5
    s_contrast: float = 1.0
    salinity_anomaly_ratio: float = 0.1  # psu per degC of anomaly
    forcing_amp: tuple = DEFAULT_FORCING_AMP
    noise_amp: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.delta > 0:
            raise DegenerateGrid("thermocline width must be positive")
        min_cell = EARTH_RADIUS * math.radians(self.spec.d_lon)
        if not self.wavelength > 2 * min_cell:
            raise DegenerateGrid("anomaly wavelength must exceed two grid cells")
        if len(self.forcing_amp) != len(FORCING_VARS):
            raise DegenerateGrid("one forcing amplitude per forcing variable is required")
        vals = [self.t_surf, self.t_deep, self.z_th, self.anomaly_amp, self.wavelength,
                self.phase_speed, self.psi0, self.eddy_fraction, self.s_deep, self.s_contrast,
                self.noise_amp, *self.forcing_amp]
        if not all(math.isfinite(v) for v in vals):
            raise DegenerateGrid("synthetic parameters must be finite")

    @property
    def period(self):
        """Days after which the anomaly, eddies and forcing repeat (inf if static)."""
        return math.inf if self.phase_speed == 0 else self.wavelength / abs(self.phase_speed)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _phase(p, lon_deg, t):
    x = EARTH_RADIUS * np.deg2rad(lon_deg)
    return 2 * math.pi * (x - p.phase_speed * t) / p.wavelength


def _eta(p, lat_deg):
    """Latitude mapped onto [0, 1] across the grid's edges."""
    s = p.spec
    south = s.lat0 - s.d_lat / 2
    north = s.lat0 + (s.n_lat - 0.5) * s.d_lat
    return (lat_deg - south) / (north - south)


def streamfunction(p, lat_deg, lon_deg, t):
    eta = _eta(p, lat_deg)
    gyre = np.sin(p.gyre_wavenumber * np.deg2rad(lon_deg)) * np.sin(math.pi * eta)
    eddy = p.eddy_fraction * np.sin(_phase(p, lon_deg, t)) * np.sin(2 * math.pi * eta)
    return p.psi0 * (gyre + eddy)


def surface_currents(p, t):
    """(u, v) from centred differences of the streamfunction.

    ``u = -dpsi/dy`` and ``v = dpsi/dx`` on the cell-centred grid, with psi
    evaluated analytically one row/column beyond the domain. With this
    construction :func:`horizontal_divergence` vanishes identically.
    """
    s = p.spec
    lats = s.lat0 + s.d_lat * np.arange(-1, s.n_lat + 1)
    lons = s.lon0 + s.d_lon * np.arange(-1, s.n_lon + 1)
    psi = streamfunction(p, lats[:, None], lons[None, :], t)
    dy = EARTH_RADIUS * math.radians(s.d_lat)
    dx = EARTH_RADIUS * np.cos(np.deg2rad(lats[1:-1])) * math.radians(s.d_lon)
    u = -(psi[2:, 1:-1] - psi[:-2, 1:-1]) / (2 * dy)
    v = (psi[1:-1, 2:] - psi[1:-1, :-2]) / (2 * dx[:, None])
    return u, v


def horizontal_divergence(u, v, spec):
    """Centred spherical divergence at interior rows; longitude wraps. Shape (H-2, W)."""
    dy = EARTH_RADIUS * math.radians(spec.d_lat)
    cos = np.cos(np.deg2rad(spec.lats))
    dx = EARTH_RADIUS * cos * math.radians(spec.d_lon)
    du = (np.roll(u, -1, axis=-1) - np.roll(u, 1, axis=-1))[..., 1:-1, :] / (2 * dx[1:-1, None])
    vc = v * cos[:, None]
    dv = (vc[..., 2:, :] - vc[..., :-2, :]) / (2 * dy * cos[1:-1, None])
    return du + dv


def splitmix64(seed, n):
    """n uint64 outputs of the splitmix64 generator started from ``seed``."""
    mask = (1 << 64) - 1
    out = np.empty(n, dtype=np.uint64)
    state = seed & mask
    for idx in range(n):
        state = (state + 0x9E3779B97F4A7C15) & mask
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
        out[idx] = z ^ (z >> 31)
    return out


def _noise(p, t, shape):
    n = int(np.prod(shape))
    bits = splitmix64((p.seed * 1_000_003 + t) & ((1 << 64) - 1), n)
    uniform = (bits >> np.uint64(11)).astype(np.float64) / float(1 << 53)
    return p.noise_amp * (2 * uniform - 1).reshape(shape)


def analytic_fields(p, t):
    """(V, D, H, W) array of the analytic state at (possibly fractional) day t."""
    s = p.spec
    z = np.asarray(s.depths)[:, None, None]
    lat = s.lats[None, :, None]
    lon = s.lons[None, None, :]
    cos2 = np.cos(np.deg2rad(lat)) ** 2
    strat = _sigmoid((p.z_th - z) / p.delta)
    decay = np.exp(-z / p.z_th)
    wave = np.sin(_phase(p, lon, t)) * decay
    thetao = p.t_deep + (p.t_surf * cos2 - p.t_deep) * strat + p.anomaly_amp * wave
    so = p.s_deep + p.s_contrast * cos2 * strat + p.salinity_anomaly_ratio * p.anomaly_amp * wave
    u, v = surface_currents(p, t)
    uo = u[None] * decay
    vo = v[None] * decay
    shape = (s.n_depth, s.n_lat, s.n_lon)
    return np.stack([np.broadcast_to(a, shape) for a in (thetao, so, uo, vo)])


def analytic_state(p, t):
    data = analytic_fields(p, t)
    if p.noise_amp:
        data = data + _noise(p, int(t), data.shape)
    return OceanState(p.spec, int(t), data)


def forcing_fields(p, t):
    s = p.spec
    lat = s.lats[:, None]
    lon = s.lons[None, :]
    eta = _eta(p, lat)
    theta = _phase(p, lon, t)
    lam = np.deg2rad(lon)
    m = p.gyre_wavenumber
    cos2 = np.cos(np.deg2rad(lat)) ** 2
    # unit-amplitude shape of the surface current pattern
    u_hat = -np.sin(m * lam) * np.cos(math.pi * eta) - p.eddy_fraction * np.sin(theta) * np.cos(2 * math.pi * eta)
    v_hat = np.cos(m * lam) * np.sin(math.pi * eta) + p.eddy_fraction * np.cos(theta) * np.sin(2 * math.pi * eta)
    a = p.forcing_amp
    shape = (s.n_lat, s.n_lon)
    chans = [
        a[0] * u_hat,
        a[1] * v_hat,
        a[2] * (0.92 + 0.08 * cos2 + 0.01 * np.sin(theta)),
        a[3] * (0.90 + 0.08 * cos2 + 0.01 * np.sin(theta)),
        MSL_BASELINE + a[4] * np.sin(theta) * np.cos(np.deg2rad(lat)),
        a[5] * cos2 * (1 + 0.1 * np.cos(theta)),
        a[6] * (0.8 + 0.2 * cos2),
        a[7] * cos2 * (1 + np.sin(theta)),
    ]
    return np.stack([np.broadcast_to(c, shape) for c in chans])


def analytic_forcing(p, t):
    return ForcingState(p.spec.surface(), int(t), forcing_fields(p, t))


def default_mask(spec):
    """Bathymetry with one continent, its continental shelf and an island.

    Columns are ocean down to their bottom depth, so the mask is column
    monotone by construction.
    """
    lats = spec.lats[:, None]
    lons = (spec.lons % 360.0)[None, :]
    bottom = np.full((spec.n_lat, spec.n_lon), np.inf)
    continent = (lons >= 60) & (lons < 100) & (lats >= -30) & (lats <= 50)
    shelf = (lons >= 50) & (lons < 110) & (lats >= -36) & (lats <= 56) & ~continent
    island = (np.abs(lons - 300) < 6) & (np.abs(lats - 10) < 5)
    bottom[shelf] = 100.0
    bottom[island] = 30.0
    bottom[continent] = -1.0
    z = np.asarray(spec.depths)[:, None, None]
    return LandSeaMask(spec, z <= bottom[None])


def gen_dataset(p, day_range, mask, out_dir):
    """Write one ocean and one forcing OGF file per day plus ``manifest.txt``."""
    days = list(day_range)
    os.makedirs(os.path.join(out_dir, "ocean"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "forcing"), exist_ok=True)
    entries = []
    for day in days:
        ocean = os.path.join("ocean", f"ocean_{day}.ogf")
        forcing = os.path.join("forcing", f"forcing_{day}.ogf")
        write_ogf(analytic_state(p, day).masked(mask), os.path.join(out_dir, ocean))
        write_ogf(analytic_forcing(p, day), os.path.join(out_dir, forcing))
        entries.append(ManifestEntry(day, ocean, forcing))
    write_ogf(mask, os.path.join(out_dir, "mask.ogf"))
    manifest = DatasetManifest(tuple(entries), os.path.abspath(out_dir))
    write_manifest(manifest, os.path.join(out_dir, "manifest.txt"))
    return manifest
