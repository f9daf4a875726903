"""Flat parameter vectors with a named layout, and the OGPW file format.

OGPW layout (little-endian)::

    4s   magic b"OGPW"
    u32  version (1)
    u64  total parameter count
    u32  number of layout entries
    per entry: u32 name length, utf-8 name, u64 offset, u32 ndim, u32 x ndim shape
    f64  payload[count]
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..errors import FormatViolation, IoFailure, TruncatedPayload

MAGIC = b"OGPW"
VERSION = 1


@dataclass(frozen=True)
class LayoutEntry:
    name: str
    offset: int
    shape: tuple

    @property
    def size(self):
        return int(np.prod(self.shape, dtype=np.int64))


class ParamSet:
    """A float64 vector partitioned exactly by an ordered layout table."""

    def __init__(self, layout, values=None):
        self.layout = tuple(layout)
        offset = 0
        for e in self.layout:
            if e.offset != offset:
                raise FormatViolation(f"layout entry {e.name!r} starts at {e.offset}, expected {offset}")
            offset += e.size
        self.count = offset
        self.values = np.zeros(offset) if values is None else np.array(values, dtype=np.float64)
        if self.values.shape != (offset,):
            raise FormatViolation(f"{self.values.size} values for a layout of {offset}")
        self._index = {e.name: e for e in self.layout}

    @classmethod
    def from_shapes(cls, named_shapes):
        layout, offset = [], 0
        for name, shape in named_shapes:
            e = LayoutEntry(name, offset, tuple(int(n) for n in shape))
            layout.append(e)
            offset += e.size
        return cls(layout)

    def __contains__(self, name):
        return name in self._index

    def entry(self, name):
        return self._index[name]

    def view(self, name, values=None):
        """Reshaped view of one tensor inside ``values`` (default: own values)."""
        e = self._index[name]
        v = self.values if values is None else values
        return v[e.offset:e.offset + e.size].reshape(e.shape)

    def names(self):
        return [e.name for e in self.layout]

    def copy(self, values=None):
        return ParamSet(self.layout, self.values if values is None else values)

    def __eq__(self, other):
        return (isinstance(other, ParamSet) and self.layout == other.layout
                and self.values.tobytes() == other.values.tobytes())

    __hash__ = None


def encode_params(ps):
    parts = [MAGIC, struct.pack("<IQI", VERSION, ps.count, len(ps.layout))]
    for e in ps.layout:
        name = e.name.encode("utf-8")
        parts.append(struct.pack("<I", len(name)) + name)
        parts.append(struct.pack("<QI", e.offset, len(e.shape)))
        parts.append(struct.pack(f"<{len(e.shape)}I", *e.shape))
    parts.append(ps.values.astype("<f8").tobytes())
    return b"".join(parts)


def decode_params(buf):
    def take(fmt, pos):
        size = struct.calcsize(fmt)
        if pos + size > len(buf):
            raise TruncatedPayload("parameter file ends inside the layout table")
        return struct.unpack_from(fmt, buf, pos), pos + size

    if buf[:4] != MAGIC:
        raise FormatViolation(f"bad magic {bytes(buf[:4])!r}")
    (version, count, n_entries), pos = take("<IQI", 4)
    if version != VERSION:
        raise FormatViolation(f"unsupported parameter-file version {version}")
    layout = []
    for _ in range(n_entries):
        (n,), pos = take("<I", pos)
        if pos + n > len(buf):
            raise TruncatedPayload("parameter file ends inside an entry name")
        name = bytes(buf[pos:pos + n]).decode("utf-8")
        pos += n
        (offset, ndim), pos = take("<QI", pos)
        shape, pos = take(f"<{ndim}I", pos)
        layout.append(LayoutEntry(name, offset, tuple(shape)))
    if len(buf) - pos != 8 * count:
        raise TruncatedPayload(f"payload has {len(buf) - pos} bytes, expected {8 * count}")
    values = np.frombuffer(buf, dtype="<f8", offset=pos, count=count).astype(np.float64)
    ps = ParamSet(layout, values)
    if ps.count != count:
        raise FormatViolation(f"layout covers {ps.count} values but header says {count}")
    return ps


def save_params(ps, path):
    try:
        with open(path, "wb") as fh:
            fh.write(encode_params(ps))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_params(path):
    try:
        with open(path, "rb") as fh:
            return decode_params(fh.read())
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
