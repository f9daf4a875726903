"""OGF: a small little-endian binary container for gridded fields.

Layout::

    0   4s   magic b"OGF1"
    4   u32  version (1)
    8   u8   kind (1 ocean, 2 forcing, 3 mask, 4 climatology)
    9   3x   padding
    12  u32  V, D, H, W
    28  f64  lat0, d_lat, lon0, d_lon
    60  f32  depths[D]
    ..  i64  time (epoch day; day-of-year slot for climatology; 0 for masks)
    ..  payload, row-major [V][D][H][W]; f32 for fields, u8 0/1 for masks (V=1)

Fields are held as float64 in memory and stored as float32, so only values
representable in float32 round-trip bit-exactly.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateGrid, FormatViolation, IoFailure, SpecMismatch, TruncatedPayload
from ..grid import FORCING_VARS, OCEAN_VARS, ForcingState, Grid3DSpec, LandSeaMask, OceanState

MAGIC = b"OGF1"
VERSION = 1
KIND_OCEAN, KIND_FORCING, KIND_MASK, KIND_CLIMATOLOGY = 1, 2, 3, 4

_FIXED = struct.Struct("<4sIB3xIIIIdddd")


def header_size(n_depth):
    return _FIXED.size + 4 * n_depth + 8


@dataclass(frozen=True)
class OgfHeader:
    kind: int
    n_var: int
    n_depth: int
    n_lat: int
    n_lon: int
    lat0: float
    d_lat: float
    lon0: float
    d_lon: float
    depths: tuple
    time: int

    @property
    def payload_bytes(self):
        itemsize = 1 if self.kind == KIND_MASK else 4
        return self.n_var * self.n_depth * self.n_lat * self.n_lon * itemsize

    def grid(self, n_var=None):
        return Grid3DSpec(self.n_var if n_var is None else n_var, self.n_depth, self.n_lat,
                          self.n_lon, self.lat0, self.d_lat, self.lon0, self.d_lon, self.depths)


def _pack_header(h):
    return (_FIXED.pack(MAGIC, VERSION, h.kind, h.n_var, h.n_depth, h.n_lat, h.n_lon,
                        h.lat0, h.d_lat, h.lon0, h.d_lon)
            + np.asarray(h.depths, dtype="<f4").tobytes()
            + struct.pack("<q", h.time))


def _header_for(spec, kind, n_var, n_depth, depths, time):
    return OgfHeader(kind, n_var, n_depth, spec.n_lat, spec.n_lon, spec.lat0, spec.d_lat,
                     spec.lon0, spec.d_lon, tuple(depths), int(time))


def encode(obj, kind=None):
    """Serialise an OceanState, ForcingState or LandSeaMask to OGF bytes.

    Pass ``kind=KIND_CLIMATOLOGY`` to store an OceanState as a climatology slot.
    """
    if isinstance(obj, LandSeaMask):
        s = obj.spec
        h = _header_for(s, KIND_MASK, 1, s.n_depth, s.depths, 0)
        payload = obj.data.astype(np.uint8).tobytes()
    elif isinstance(obj, ForcingState):
        h = _header_for(obj.spec, KIND_FORCING, len(FORCING_VARS), 1, (0.0,), obj.time)
        payload = obj.data.astype("<f4").tobytes()
    elif isinstance(obj, OceanState):
        kind = KIND_OCEAN if kind is None else kind
        if kind not in (KIND_OCEAN, KIND_CLIMATOLOGY):
            raise FormatViolation(f"an ocean state cannot be written as kind {kind}")
        s = obj.spec
        h = _header_for(s, kind, s.n_var, s.n_depth, s.depths, obj.time)
        payload = obj.data.astype("<f4").tobytes()
    else:
        raise TypeError(f"cannot encode {type(obj).__name__} as OGF")
    return _pack_header(h) + payload


def decode_header(buf):
    if len(buf) < _FIXED.size:
        raise TruncatedPayload(f"{len(buf)} bytes is shorter than the fixed header")
    magic, version, kind, v, d, h, w, lat0, dlat, lon0, dlon = _FIXED.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatViolation(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatViolation(f"unsupported version {version}")
    if kind not in (KIND_OCEAN, KIND_FORCING, KIND_MASK, KIND_CLIMATOLOGY):
        raise FormatViolation(f"unknown kind {kind}")
    if min(v, d, h, w) < 1:
        raise FormatViolation(f"zero-sized dimension in {(v, d, h, w)}")
    if (kind == KIND_MASK and v != 1) or (kind == KIND_FORCING and (v, d) != (len(FORCING_VARS), 1)):
        raise FormatViolation(f"dims {(v, d, h, w)} invalid for kind {kind}")
    if kind in (KIND_OCEAN, KIND_CLIMATOLOGY) and v != len(OCEAN_VARS):
        raise FormatViolation(f"ocean payload must have {len(OCEAN_VARS)} variables, got {v}")
    if len(buf) < header_size(d):
        raise TruncatedPayload("file ends inside the header")
    depths = np.frombuffer(buf, dtype="<f4", count=d, offset=_FIXED.size).astype(np.float64)
    (time,) = struct.unpack_from("<q", buf, _FIXED.size + 4 * d)
    return OgfHeader(kind, v, d, h, w, lat0, dlat, lon0, dlon, tuple(depths.tolist()), time)


def decode(buf):
    hdr = decode_header(buf)
    start = header_size(hdr.n_depth)
    n = hdr.payload_bytes
    if len(buf) < start + n:
        raise TruncatedPayload(f"payload has {len(buf) - start} bytes, expected {n}")
    if len(buf) > start + n:
        raise FormatViolation(f"{len(buf) - start - n} trailing bytes after payload")
    try:
        if hdr.kind == KIND_MASK:
            raw = np.frombuffer(buf, dtype=np.uint8, offset=start, count=n)
            if np.any(raw > 1):
                raise FormatViolation("mask payload holds values other than 0/1")
            grid = hdr.grid(n_var=len(OCEAN_VARS))
            return LandSeaMask(grid, raw.reshape(grid.shape[1:]).astype(bool))
        values = np.frombuffer(buf, dtype="<f4", offset=start).astype(np.float64)
        grid = hdr.grid()
        if hdr.kind == KIND_FORCING:
            return ForcingState(grid, hdr.time, values.reshape(hdr.n_var, hdr.n_lat, hdr.n_lon))
        return OceanState(grid, hdr.time, values.reshape(grid.shape))
    except (DegenerateGrid, SpecMismatch) as exc:
        raise FormatViolation(str(exc)) from exc


def write_ogf(obj, path, kind=None):
    data = encode(obj, kind)
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _read_bytes(path):
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


def read_ogf(path):
    return decode(_read_bytes(path))


def read_header(path):
    return decode_header(_read_bytes(os.fspath(path)))
