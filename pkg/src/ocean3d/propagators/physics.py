"""Baseline propagators: persistence, climatology nudging and an advective surrogate.

Every propagator maps ``(x_prev, x_t, f_prev, f_t)`` to a StateIncrement of
its configured lead, with NaN exactly on land.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import CflViolation, SpecMismatch
from ..grid import EARTH_RADIUS, OCEAN_VARS, LandSeaMask, cell_geometry
from ..objective import Climatology, StateIncrement, doy_slot

SECONDS_PER_DAY = 86_400.0


def ocean_mask_of(state):
    """Mask implied by a mask-applied state (land holds NaN)."""
    return LandSeaMask(state.spec, np.isfinite(state.data[0]))


def _land(mask, state):
    return ~(mask.data if mask is not None else ocean_mask_of(state).data)


def persistence_step(x_prev, x_t, f_prev, f_t, lead=1, mask=None):
    return StateIncrement.zeros(x_t, lead, LandSeaMask(x_t.spec, ~_land(mask, x_t)))


def climatology_nudge_step(x_t, clim, alpha, lead=1, mask=None):
    """alpha * (climatology at the target day - x_t)."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"nudging weight {alpha} outside [0, 1]")
    if not x_t.spec.same_layout(clim.spec):
        raise SpecMismatch("state and climatology grids differ")
    target = clim.field(doy_slot(x_t.time + lead))
    data = alpha * (target - x_t.data)
    data = np.where(_land(mask, x_t)[None], np.nan, data)
    return StateIncrement(x_t.spec, x_t.time, lead, data)


def _face_velocity(a, b):
    return 0.5 * (a + b)


def _zonal_flux_divergence(field, u, ocean, periodic, dx, dy):
    """Upwind flux-form zonal transport tendency, (D, H, W) in field units per second.

    Faces touching land or (for a regional grid) the domain edge carry no flux.
    """
    east = np.roll(field, -1, axis=-1)
    u_e = _face_velocity(u, np.roll(u, -1, axis=-1))
    open_e = ocean & np.roll(ocean, -1, axis=-1)
    if not periodic:
        open_e[..., -1] = False
    flux = np.where(open_e, u_e * np.where(u_e > 0, field, east) * dy, 0.0)
    return -(flux - np.roll(flux, 1, axis=-1)) / (dx[None, :, None] * dy)


def _meridional_flux_divergence(field, v, ocean, dx, dy, dx_face):
    north = field[:, 1:]
    v_n = _face_velocity(v[:, :-1], v[:, 1:])
    open_n = ocean[:, :-1] & ocean[:, 1:]
    inner = np.where(open_n, v_n * np.where(v_n > 0, field[:, :-1], north) * dx_face[None, :, None], 0.0)
    flux = np.zeros(field.shape[:1] + (field.shape[1] + 1,) + field.shape[2:])
    flux[:, 1:-1] = inner
    return -(flux[:, 1:] - flux[:, :-1]) / (dx[None, :, None] * dy)


def _diffusion(field, ocean, periodic, dx, dy, dx_face, kappa):
    east = np.roll(field, -1, axis=-1)
    open_e = ocean & np.roll(ocean, -1, axis=-1)
    if not periodic:
        open_e[..., -1] = False
    fx = np.where(open_e, kappa * (east - field) / dx[None, :, None] * dy, 0.0)
    fy_inner = np.where(ocean[:, :-1] & ocean[:, 1:],
                        kappa * (field[:, 1:] - field[:, :-1]) / dy * dx_face[None, :, None], 0.0)
    fy = np.zeros(field.shape[:1] + (field.shape[1] + 1,) + field.shape[2:])
    fy[:, 1:-1] = fy_inner
    div = (fx - np.roll(fx, 1, axis=-1)) + (fy[:, 1:] - fy[:, :-1])
    return div / (dx[None, :, None] * dy)


def advective_step(x_prev, x_t, f_prev, f_t, kappa=1000.0, gamma=0.0, lead=1, z_ref=50.0, mask=None):
    """One forward-Euler step of ``lead`` days.

    Tendencies: flux-form upwind advection of thetao and so by (uo, vo);
    Laplacian diffusion ``kappa`` (m^2/s) on every variable; a wind drag
    ``gamma * (u10, v10) * exp(-z / z_ref)`` (gamma in 1/s) on the currents.
    Fluxes through faces adjacent to land are zero, so coastal stencils are
    one-sided. Longitude wraps on global grids.
    """
    spec = x_t.spec
    if not (spec.same_layout(x_prev.spec) and spec.same_horizontal(f_t.spec)):
        raise SpecMismatch("inputs live on different grids")
    ocean = ~_land(mask, x_t)
    geom = cell_geometry(spec)
    dx, dy = geom.dx, geom.dy
    lat_face = spec.lats[:-1] + 0.5 * spec.d_lat
    dx_face = EARTH_RADIUS * np.cos(np.deg2rad(lat_face)) * math.radians(spec.d_lon)
    periodic = spec.is_periodic_lon
    dt = lead * SECONDS_PER_DAY

    x = np.where(ocean[None], x_t.data, 0.0)
    T, S, u, v = (x[OCEAN_VARS.index(n)] for n in OCEAN_VARS)
    cfl = max(float(np.max(np.abs(u) * dt / dx[None, :, None], initial=0.0)),
              float(np.max(np.abs(v) * dt / dy, initial=0.0)))
    if not cfl < 1.0:
        raise CflViolation(f"CFL number {cfl:.3f} >= 1 for a {lead}-day step")

    tend = np.zeros_like(x)
    for idx, tracer in ((0, T), (1, S)):
        tend[idx] += _zonal_flux_divergence(tracer, u, ocean, periodic, dx, dy)
        tend[idx] += _meridional_flux_divergence(tracer, v, ocean, dx, dy, dx_face)
    if kappa:
        for idx in range(len(OCEAN_VARS)):
            tend[idx] += _diffusion(x[idx], ocean, periodic, dx, dy, dx_face, kappa)
    if gamma:
        decay = np.exp(-np.asarray(spec.depths) / z_ref)[:, None, None]
        tend[2] += gamma * f_t.data[0][None] * decay
        tend[3] += gamma * f_t.data[1][None] * decay
    data = np.where(ocean[None], tend * dt, np.nan)
    return StateIncrement(spec, x_t.time, lead, data)


@dataclass(frozen=True)
class Persistence:
    lead: int = 1
    kind = "persistence"

    def __call__(self, x_prev, x_t, f_prev, f_t):
        return persistence_step(x_prev, x_t, f_prev, f_t, lead=self.lead)


@dataclass(frozen=True)
class ClimatologyNudge:
    clim: Climatology
    alpha: float = 0.1
    lead: int = 1
    kind = "climatology_nudge"

    def __call__(self, x_prev, x_t, f_prev, f_t):
        return climatology_nudge_step(x_t, self.clim, self.alpha, lead=self.lead)


@dataclass(frozen=True)
class Advective:
    kappa: float = 1000.0
    gamma: float = 0.0
    lead: int = 1
    z_ref: float = 50.0
    kind = "advective"

    def __call__(self, x_prev, x_t, f_prev, f_t):
        return advective_step(x_prev, x_t, f_prev, f_t, self.kappa, self.gamma, self.lead, self.z_ref)
