"""Regular latitude-longitude-depth grids, land-sea masks and cell geometry.

Longitudes are east-positive and treated modulo 360. Land cells carry NaN in
state arrays, but the boolean mask is the authority for every reduction.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateGrid, OutOfDomain, PolarRow, SpecMismatch

OCEAN_VARS = ("thetao", "so", "uo", "vo")
OCEAN_UNITS = ("degC", "psu", "m/s", "m/s")
FORCING_VARS = ("u10", "v10", "t2m", "d2m", "msl", "ssr", "strd", "mtp")
FORCING_UNITS = ("m/s", "m/s", "K", "K", "Pa", "J/m2", "J/m2", "m/day")

EARTH_RADIUS = 6_371_000.0


def _frozen(a, dtype):
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Grid3DSpec:
    n_var: int
    n_depth: int
    n_lat: int
    n_lon: int
    lat0: float
    d_lat: float
    lon0: float
    d_lon: float
    depths: tuple

    def __post_init__(self):
        object.__setattr__(self, "depths", tuple(float(z) for z in self.depths))
        if min(self.n_var, self.n_depth, self.n_lat, self.n_lon) < 1:
            raise DegenerateGrid("every grid dimension must be >= 1")
        if len(self.depths) != self.n_depth:
            raise DegenerateGrid(f"{len(self.depths)} depths given for n_depth={self.n_depth}")
        z = np.asarray(self.depths)
        if not np.all(np.isfinite(z)) or z[0] < 0 or np.any(np.diff(z) <= 0):
            raise DegenerateGrid("depths must be finite, non-negative and strictly increasing")
        if not (self.d_lat > 0 and self.d_lon > 0):
            raise DegenerateGrid("d_lat and d_lon must be positive")
        last = self.lat0 + (self.n_lat - 1) * self.d_lat
        if self.lat0 < -90 or last > 90:
            raise DegenerateGrid(f"latitudes {self.lat0}..{last} leave [-90, 90]")

    @property
    def shape(self):
        return (self.n_var, self.n_depth, self.n_lat, self.n_lon)

    @property
    def lats(self):
        return self.lat0 + self.d_lat * np.arange(self.n_lat)

    @property
    def lons(self):
        return self.lon0 + self.d_lon * np.arange(self.n_lon)

    @property
    def is_periodic_lon(self):
        return math.isclose(self.n_lon * self.d_lon, 360.0, rel_tol=0, abs_tol=1e-9)

    def with_vars(self, n_var):
        return dataclasses.replace(self, n_var=n_var)

    def surface(self, n_var=len(FORCING_VARS)):
        """Single-level grid on the same horizontal layout (used for forcing)."""
        return dataclasses.replace(self, n_var=n_var, n_depth=1, depths=(0.0,))

    def same_horizontal(self, other):
        return (self.n_lat, self.n_lon, self.lat0, self.d_lat, self.lon0, self.d_lon) == (
            other.n_lat, other.n_lon, other.lat0, other.d_lat, other.lon0, other.d_lon)

    def same_layout(self, other):
        return self.same_horizontal(other) and self.depths == other.depths


def regular_grid(depths, n_lat, n_lon, lat_range=(-60.0, 60.0), lon0=None, n_var=len(OCEAN_VARS)):
    """Cell-centred grid with `n_lat` rows across `lat_range` and global longitude."""
    lo, hi = lat_range
    d_lat = (hi - lo) / n_lat
    d_lon = 360.0 / n_lon
    if lon0 is None:
        lon0 = d_lon / 2
    return Grid3DSpec(n_var, len(depths), n_lat, n_lon, lo + d_lat / 2, d_lat, lon0, d_lon, tuple(depths))


@dataclass(frozen=True)
class OceanState:
    """One daily snapshot of (thetao, so, uo, vo) on a [D, H, W] grid."""

    spec: Grid3DSpec
    time: int
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(self.data, np.float64))
        object.__setattr__(self, "time", int(self.time))
        if self.data.shape != self.spec.shape:
            raise SpecMismatch(f"data shape {self.data.shape} != spec shape {self.spec.shape}")

    def var(self, name):
        return self.data[OCEAN_VARS.index(name)]

    def masked(self, mask):
        """Copy with NaN written at every land cell."""
        return OceanState(self.spec, self.time, np.where(mask.data[None], self.data, np.nan))


@dataclass(frozen=True)
class ForcingState:
    """Eight surface atmospheric fields on an [H, W] grid (order: FORCING_VARS)."""

    spec: Grid3DSpec
    time: int
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(self.data, np.float64))
        object.__setattr__(self, "time", int(self.time))
        want = (len(FORCING_VARS), self.spec.n_lat, self.spec.n_lon)
        if self.data.shape != want:
            raise SpecMismatch(f"forcing shape {self.data.shape} != {want}")


@dataclass(frozen=True)
class LandSeaMask:
    """D x H x W booleans, True marks a valid ocean cell."""

    spec: Grid3DSpec
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(self.data, bool))
        if self.data.shape != self.spec.shape[1:]:
            raise SpecMismatch(f"mask shape {self.data.shape} != {self.spec.shape[1:]}")

    @classmethod
    def all_ocean(cls, spec):
        return cls(spec, np.ones(spec.shape[1:], dtype=bool))

    @property
    def n_ocean(self):
        return int(self.data.sum())


class MaskViolation(NamedTuple):
    k: int | None
    i: int | None
    j: int | None
    reason: str


def validate_mask(mask):
    """List bathymetric inconsistencies; an empty list means the mask is usable.

    One violation is reported per offending column, located at the shallowest
    ocean cell that sits below a land cell.
    """
    m = mask.data
    out = []
    if not m.any():
        out.append(MaskViolation(None, None, None, "mask has no ocean cell"))
    land_above = np.logical_or.accumulate(~m, axis=0)
    land_above = np.concatenate([np.zeros_like(m[:1]), land_above[:-1]], axis=0)
    bad = m & land_above
    cols = np.argwhere(bad.any(axis=0))
    for i, j in cols:
        k = int(np.argmax(bad[:, i, j]))
        out.append(MaskViolation(k, int(i), int(j), "ocean below land"))
    return out


def latitude_weights(spec):
    """cos(latitude) per grid row. The scale is irrelevant in a weight ratio."""
    lats = spec.lats
    if np.any(np.isclose(np.abs(lats), 90.0, rtol=0, atol=1e-12)):
        raise PolarRow("grid contains a row at a pole; its area weight is zero")
    return np.cos(np.deg2rad(lats))


@dataclass(frozen=True)
class CellGeometry:
    dx: np.ndarray  # (H,) zonal spacing per row, m
    dy: float  # meridional spacing, m
    dz: np.ndarray  # (D,) layer thickness, m
    volume: np.ndarray  # (D, H, W), m^3


def layer_thickness(depths):
    z = np.asarray(depths, dtype=float)
    if z.size < 2:
        raise DegenerateGrid("layer thickness needs at least two depth levels")
    faces = np.concatenate([[0.0], 0.5 * (z[1:] + z[:-1]), [z[-1]]])
    return np.diff(faces)


def cell_geometry(spec, earth_radius=EARTH_RADIUS):
    if earth_radius <= 0:
        raise DegenerateGrid("earth radius must be positive")
    dz = layer_thickness(spec.depths)
    dx = earth_radius * np.cos(np.deg2rad(spec.lats)) * math.radians(spec.d_lon)
    dy = earth_radius * math.radians(spec.d_lat)
    vol = dz[:, None, None] * dx[None, :, None] * dy * np.ones((1, 1, spec.n_lon))
    return CellGeometry(_frozen(dx, float), float(dy), _frozen(dz, float), _frozen(vol, float))


@dataclass(frozen=True)
class SectionSpec:
    name: str
    lat: float
    lon_min: float
    lon_max: float


@dataclass(frozen=True)
class Section:
    name: str
    variable: str
    lat: float  # snapped row latitude
    row: int
    columns: np.ndarray  # grid column indices, west to east from lon_min
    lons: np.ndarray
    depths: np.ndarray
    values: np.ndarray  # (D, n_columns)


def section_columns(spec, sec):
    """Grid columns whose longitude falls in [lon_min, lon_max], walking east."""
    start = sec.lon_min % 360.0
    span = (sec.lon_max - sec.lon_min) % 360.0
    if span == 0 and sec.lon_max != sec.lon_min:
        span = 360.0
    offset = (spec.lons - start) % 360.0
    tol = 1e-9
    offset[np.isclose(offset, 360.0, rtol=0, atol=tol)] = 0.0
    cols = np.nonzero(offset <= span + tol)[0]
    return cols[np.argsort(offset[cols], kind="stable")]


def section_row(spec, lat):
    lats = spec.lats
    if not (lats[0] - spec.d_lat / 2 <= lat <= lats[-1] + spec.d_lat / 2):
        raise OutOfDomain(f"latitude {lat} lies outside the grid ({lats[0]}..{lats[-1]})")
    return int(np.argmin(np.abs(lats - lat)))


def extract_section(state, sec, variable="thetao"):
    row = section_row(state.spec, sec.lat)
    cols = section_columns(state.spec, sec)
    if cols.size == 0:
        raise OutOfDomain(f"section {sec.name!r} longitude range misses every grid column")
    values = state.data[OCEAN_VARS.index(variable)][:, row, :][:, cols]
    return Section(sec.name, variable, float(state.spec.lats[row]), row, cols,
                   state.spec.lons[cols] % 360.0, np.asarray(state.spec.depths), values.copy())


def embed_section(field, section):
    """Write a section's values back into a copy of a (D, H, W) field."""
    out = np.array(field, dtype=float, copy=True)
    out[:, section.row, section.columns] = section.values
    return out
