"""State increments, the latitude-weighted masked increment loss, and climatology."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyManifest, EmptyMask, FormatViolation, IoFailure, NonPositiveLead, SpecMismatch
from .grid import OceanState
from .io.manifest import day_to_date
from .io.ogf import KIND_CLIMATOLOGY, read_header, read_ogf, write_ogf

N_SLOTS = 366
LEAP_SLOT = 60


@dataclass(frozen=True)
class StateIncrement:
    """X(t + lead) - X(t) on the ocean grid; ``time`` is the base day t."""

    spec: object
    time: int
    lead: int
    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        if arr.shape != self.spec.shape:
            raise SpecMismatch(f"increment shape {arr.shape} != {self.spec.shape}")

    @classmethod
    def zeros(cls, x_t, lead, mask=None):
        data = np.zeros(x_t.spec.shape)
        if mask is not None:
            data[:, ~mask.data] = np.nan
        return cls(x_t.spec, x_t.time, lead, data)


def _check_same(a, b):
    if not a.spec.same_layout(b.spec) or a.spec.n_var != b.spec.n_var:
        raise SpecMismatch("states live on different grids")


def increment(x_t, x_next):
    _check_same(x_t, x_next)
    lead = x_next.time - x_t.time
    if lead <= 0:
        raise NonPositiveLead(f"target day {x_next.time} does not follow base day {x_t.time}")
    return StateIncrement(x_t.spec, x_t.time, lead, x_next.data - x_t.data)


def apply_increment(x_t, d):
    _check_same(x_t, d)
    return OceanState(x_t.spec, x_t.time + d.lead, x_t.data + d.data)


def _values(x):
    if isinstance(x, np.ndarray):
        return np.asarray(x, dtype=np.float64)
    return x.data


def weighted_increment_mse(pred, truth, mask, w):
    """Latitude-weighted mean squared increment error over ocean cells.

    ``sum_{v,k,i,j} w_i M_kij (pred - truth)^2 / sum_{v,k,i,j} w_i M_kij``.
    Values stored at land cells never enter the result.
    """
    p, t = _values(pred), _values(truth)
    m = np.asarray(mask if isinstance(mask, np.ndarray) else mask.data, dtype=bool)
    w = np.asarray(w, dtype=np.float64)
    if p.shape != t.shape or p.shape[1:] != m.shape or w.shape != (m.shape[1],):
        raise SpecMismatch(f"shapes pred {p.shape}, truth {t.shape}, mask {m.shape}, weights {w.shape}")
    cell_w = np.where(m, w[None, :, None], 0.0)
    denom = p.shape[0] * cell_w.sum()
    if denom == 0:
        raise EmptyMask("no weighted ocean cell contributes to the loss")
    diff = np.where(m[None], p - t, 0.0)
    return float((cell_w[None] * diff * diff).sum() / denom)


def doy_slot(day):
    """Day-of-year slot in 1..366 with 29 February pinned to slot 60 in every year."""
    date = day_to_date(day)
    doy = date.timetuple().tm_yday
    leap = date.year % 4 == 0 and (date.year % 100 != 0 or date.year % 400 == 0)
    return doy if leap or doy < LEAP_SLOT else doy + 1


def _cyclic_distance(a, b):
    d = abs(a - b) % N_SLOTS
    return min(d, N_SLOTS - d)


@dataclass(frozen=True)
class Climatology:
    """Per day-of-year mean ocean state.

    ``means`` holds the populated slots (plus a synthesised leap day);
    ``borrowed`` maps every other slot to the populated slot it copies.
    A centred running mean of ``window`` slots is applied on access.
    """

    spec: object
    means: dict
    borrowed: dict = field(default_factory=dict)
    window: int = 1

    def _filled(self, slot):
        slot = (slot - 1) % N_SLOTS + 1
        return self.means[self.borrowed.get(slot, slot)]

    def field(self, slot):
        if self.window <= 1:
            return self._filled(slot)
        half = self.window // 2
        offsets = range(-half, self.window - half)
        acc = np.zeros(self.spec.shape)
        for o in offsets:
            acc = acc + self._filled(slot + o)
        return acc / self.window

    def state(self, day):
        return OceanState(self.spec, day, self.field(doy_slot(day)))


def _fill_slots(means):
    if not means:
        raise EmptyManifest("no populated climatology slot")
    populated = sorted(means)
    borrowed = {}
    for slot in range(1, N_SLOTS + 1):
        if slot in means or slot == LEAP_SLOT:
            continue
        borrowed[slot] = min(populated, key=lambda s: (_cyclic_distance(s, slot), s))
    if LEAP_SLOT not in means:
        src = lambda s: means[borrowed.get(s, s)]
        means = dict(means)
        means[LEAP_SLOT] = 0.5 * (src(LEAP_SLOT - 1) + src(LEAP_SLOT + 1))
    return means, borrowed


def climatology_from_states(states, mask, window=1):
    sums, counts = {}, {}
    spec = None
    for st in states:
        spec = spec or st.spec
        slot = doy_slot(st.time)
        sums[slot] = sums[slot] + st.data if slot in sums else np.array(st.data, dtype=np.float64)
        counts[slot] = counts.get(slot, 0) + 1
    if spec is None:
        raise EmptyManifest("no states to build a climatology from")
    land = ~np.asarray(mask.data, dtype=bool)
    means = {}
    for slot, total in sums.items():
        mean = total / counts[slot]
        mean[:, land] = np.nan
        means[slot] = mean
    means, borrowed = _fill_slots(means)
    return Climatology(spec, means, borrowed, window)


def build_climatology(manifest, mask, window=1):
    if len(manifest) == 0:
        raise EmptyManifest("manifest is empty")
    states = (read_ogf(manifest.ocean_path(d)) for d in manifest.days)
    return climatology_from_states(states, mask, window)


def anomaly(state, clim):
    if not state.spec.same_layout(clim.spec):
        raise SpecMismatch("state and climatology grids differ")
    return OceanState(state.spec, state.time, state.data - clim.field(doy_slot(state.time)))


def write_climatology(clim, out_dir):
    """One OGF (kind 4) per distinct slot field plus ``climatology_index.json``."""
    os.makedirs(out_dir, exist_ok=True)
    index = {}
    slots = range(1, N_SLOTS + 1) if clim.window > 1 else sorted(clim.means)
    for slot in slots:
        name = f"clim_{slot:03d}.ogf"
        write_ogf(OceanState(clim.spec, slot, clim.field(slot)), os.path.join(out_dir, name),
                  kind=KIND_CLIMATOLOGY)
        index[slot] = name
    if clim.window <= 1:
        for slot, src in clim.borrowed.items():
            index[slot] = index[src]
    # stored fields already include the smoothing
    meta = {"smoothing_window": clim.window,
            "slots": {str(s): index[s] for s in sorted(index)},
            "borrowed": {str(s): clim.borrowed[s] for s in sorted(clim.borrowed)}}
    try:
        with open(os.path.join(out_dir, "climatology_index.json"), "w") as fh:
            json.dump(meta, fh, indent=1, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def read_climatology(out_dir):
    try:
        with open(os.path.join(out_dir, "climatology_index.json")) as fh:
            meta = json.load(fh)
    except (OSError, ValueError) as exc:
        raise IoFailure(f"cannot read climatology index in {out_dir}: {exc}") from exc
    cache, means, spec = {}, {}, None
    for key, name in meta["slots"].items():
        if name not in cache:
            path = os.path.join(out_dir, name)
            if read_header(path).kind != KIND_CLIMATOLOGY:
                raise FormatViolation(f"{path} is not a climatology file")
            cache[name] = read_ogf(path)
        st = cache[name]
        spec = st.spec
        means[int(key)] = st.data
    if len(means) != N_SLOTS:
        raise FormatViolation("climatology index does not cover every slot")
    return Climatology(spec, means, {}, 1)
