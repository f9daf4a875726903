"""Verification metrics: RMSE/ACC per lead, EKE, variance, SST gradients, OHC, sections.

Conventions:

* RMSE and ACC weight cells by cos(latitude) times the land-sea mask, at
  every depth. RMSE is computed per initialization and then averaged; ACC
  pools cells and initializations per lead.
* EKE and variance use the time mean of the evaluated series as reference
  and integrate over cell volumes (m^3), so EKE is in m^5 s^-2.
* Values stored at masked cells never affect a result.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyMask, NoValidStencil, OutOfDomain, PairMismatch, TooFewSnapshots, ZeroAnomalyVariance
from .grid import OCEAN_VARS, SectionSpec, extract_section
from .objective import doy_slot

RHO = 1025.0  # kg m^-3
CP = 3985.0  # J kg^-1 K^-1
HIST_BINS = 64
HIST_MAX = 5e-4  # K/m

REGIONAL_SECTIONS = {
    "equatorial_pacific": SectionSpec("equatorial_pacific", 0.0, 140.0, 260.0),
    "kuroshio_extension": SectionSpec("kuroshio_extension", 40.0, 140.0, 180.0),
    "southern_ocean": SectionSpec("southern_ocean", -55.0, 60.0, 150.0),
}

ALL_DEPTHS = "all"


@dataclass
class Curve:
    metric: str
    variable: str
    depth: object  # depth in m, or "all" for the column aggregate
    points: dict  # x -> value, sorted ascending
    unit: str = ""
    x_name: str = "lead_days"


@dataclass
class Histogram:
    """Counts over ``edges`` plus a final overflow bin [edges[-1], inf)."""

    name: str
    edges: np.ndarray
    counts: np.ndarray
    unit: str = "K/m"

    @property
    def bins(self):
        lo = list(self.edges[:-1]) + [self.edges[-1]]
        hi = list(self.edges[1:]) + [np.inf]
        return list(zip(lo, hi, self.counts))


@dataclass
class Field2D:
    name: str
    lats: np.ndarray
    lons: np.ndarray
    values: np.ndarray
    unit: str = ""


@dataclass
class MetricReport:
    curves: list = field(default_factory=list)
    scalars: dict = field(default_factory=dict)  # name -> (value, unit)
    histograms: list = field(default_factory=list)
    fields: list = field(default_factory=list)
    sections: list = field(default_factory=list)  # (Section, unit)
    tables: list = field(default_factory=list)  # (file name, header, rows)
    provenance: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def curve_family(self, metric):
        return [c for c in self.curves if c.metric == metric]

    def is_empty(self):
        return not (self.curves or self.scalars or self.histograms or self.fields or self.sections)


def _arr(x):
    return np.asarray(getattr(x, "data", x), dtype=np.float64)


def _mask(mask):
    return np.asarray(getattr(mask, "data", mask), dtype=bool)


def _cell_weights(mask, w):
    m = _mask(mask)
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (m.shape[1],):
        raise PairMismatch(f"{w.shape[0] if w.ndim else 0} latitude weights for {m.shape[1]} rows")
    return np.where(m, w[None, :, None], 0.0)


def _pairs(forecasts, truths):
    if len(forecasts) != len(truths):
        raise PairMismatch(f"{len(forecasts)} forecasts but {len(truths)} truths")
    for fc, tr in zip(forecasts, truths):
        missing = set(fc) - set(tr)
        if missing:
            raise PairMismatch(f"no truth for leads {sorted(missing)}")
    return list(zip(forecasts, truths))


def rmse(forecasts, truths, mask, w, per_depth=False, variables=OCEAN_VARS):
    """RMSE curves keyed by (variable, depth) -> {lead: value}.

    ``forecasts`` and ``truths`` are parallel sequences (one per initialization)
    of mappings lead -> state. Depth is "all" unless ``per_depth``.
    """
    cw = _cell_weights(mask, w)
    pairs = _pairs(forecasts, truths)
    depth_index = range(cw.shape[0]) if per_depth else [None]
    totals = {}
    for fc, tr in pairs:
        for lead in fc:
            f, t = _arr(fc[lead]), _arr(tr[lead])
            if f.shape != t.shape or f.shape[1:] != cw.shape:
                raise PairMismatch(f"shapes {f.shape} and {t.shape} at lead {lead}")
            for v in variables:
                iv = OCEAN_VARS.index(v)
                e = np.where(cw > 0, f[iv] - t[iv], 0.0)
                for k in depth_index:
                    sl = slice(None) if k is None else slice(k, k + 1)
                    den = cw[sl].sum()
                    if den == 0:
                        raise EmptyMask(f"no weighted ocean cell for {v} at depth index {k}")
                    val = np.sqrt((cw[sl] * e[sl] ** 2).sum() / den)
                    totals.setdefault((v, ALL_DEPTHS if k is None else k, lead), []).append(val)
    out = {}
    for (v, k, lead), vals in sorted(totals.items(), key=lambda kv: (kv[0][0], str(kv[0][1]), kv[0][2])):
        out.setdefault((v, k), {})[lead] = float(np.mean(vals))
    return out


def acc_value(f_anom, o_anom, cw):
    """Weighted anomaly correlation of pooled arrays."""
    num = (cw * f_anom * o_anom).sum()
    den = np.sqrt((cw * f_anom ** 2).sum() * (cw * o_anom ** 2).sum())
    if not den > 0:
        raise ZeroAnomalyVariance("forecast or observed anomalies have zero weighted variance")
    return float(np.clip(num / den, -1.0, 1.0))


def acc(forecasts, truths, clim, mask, w, variables=OCEAN_VARS, undefined=None):
    """ACC curves per variable -> {lead: value}, pooled over cells and initializations.

    Leads where the anomaly variance vanishes are omitted and, when a list
    is passed as ``undefined``, appended to it as (variable, lead).
    """
    cw = _cell_weights(mask, w)
    pairs = _pairs(forecasts, truths)
    leads = sorted(set().union(*(set(fc) for fc, _ in pairs))) if pairs else []
    out = {}
    for v in variables:
        iv = OCEAN_VARS.index(v)
        for lead in leads:
            fs, os_, ws = [], [], []
            for fc, tr in pairs:
                if lead not in fc:
                    continue
                c = clim.field(doy_slot(tr[lead].time))[iv]
                fs.append(np.where(cw > 0, _arr(fc[lead])[iv] - c, 0.0))
                os_.append(np.where(cw > 0, _arr(tr[lead])[iv] - c, 0.0))
                ws.append(cw)
            try:
                out.setdefault(v, {})[lead] = acc_value(np.stack(fs), np.stack(os_), np.stack(ws))
            except ZeroAnomalyVariance:
                if undefined is not None:
                    undefined.append((v, lead))
    return {v: c for v, c in out.items() if c}


def _series(series, variable=None):
    arrs = []
    for s in series:
        a = _arr(s)
        if variable is not None and a.ndim == 4:
            a = a[OCEAN_VARS.index(variable)]
        arrs.append(a)
    return arrs


def eke(series, geom, mask):
    """Mean over snapshots of sum M vol 0.5 (u'^2 + v'^2), m^5 s^-2."""
    if len(series) < 2:
        raise TooFewSnapshots(f"EKE needs at least two snapshots, got {len(series)}")
    m = _mask(mask)
    u = np.stack([np.where(m, a, 0.0) for a in _series(series, "uo")])
    v = np.stack([np.where(m, a, 0.0) for a in _series(series, "vo")])
    up, vp = u - u.mean(axis=0), v - v.mean(axis=0)
    vol = np.where(m, geom.volume, 0.0)
    per = (vol[None] * 0.5 * (up ** 2 + vp ** 2)).sum(axis=(1, 2, 3))
    return float(per.mean())


def field_variance(series, geom, mask, variable=None):
    """Mean over snapshots of sum M vol (x - volume mean)^2, (unit)^2 m^3.

    ``series`` holds (D, H, W) arrays, or full states with ``variable`` named.
    """
    if len(series) < 1:
        raise TooFewSnapshots("variance needs at least one snapshot")
    m = _mask(mask)
    vol = np.where(m, geom.volume, 0.0)
    total = vol.sum()
    if total == 0:
        raise EmptyMask("no ocean volume")
    vals = []
    for a in _series(series, variable or "thetao"):
        x = np.where(m, a, 0.0)
        mean = (vol * x).sum() / total
        vals.append((vol * (x - mean) ** 2).sum())
    return float(np.mean(vals))


def sst_gradient(state, geom, mask, periodic=None):
    """|grad SST| (K/m) at surface cells whose centred stencil is all ocean; NaN elsewhere."""
    spec = state.spec
    periodic = spec.is_periodic_lon if periodic is None else periodic
    T = _arr(state)[0, 0] if _arr(state).ndim == 4 else _arr(state)[0]
    m = _mask(mask)[0]
    H, W = m.shape
    valid = m.copy()
    valid[0] = valid[-1] = False
    valid[1:-1] &= m[:-2] & m[2:]
    east, west = np.roll(m, -1, axis=1), np.roll(m, 1, axis=1)
    valid &= east & west
    if not periodic:
        valid[:, 0] = valid[:, -1] = False
    Tz = np.where(m, T, 0.0)
    gx = (np.roll(Tz, -1, axis=1) - np.roll(Tz, 1, axis=1)) / (2 * geom.dx[:, None])
    gy = np.zeros_like(Tz)
    gy[1:-1] = (Tz[2:] - Tz[:-2]) / (2 * geom.dy)
    return np.where(valid, np.sqrt(gx ** 2 + gy ** 2), np.nan)


def histogram_edges(n_bins=HIST_BINS, upper=HIST_MAX):
    return np.linspace(0.0, upper, n_bins + 1)


def histogram(values, edges, name="sst_gradient"):
    vals = np.asarray(values, dtype=np.float64)
    vals = vals[np.isfinite(vals)]
    idx = np.searchsorted(edges, vals, side="right") - 1
    idx = np.clip(idx, 0, len(edges) - 1)  # below edges[0] cannot occur for magnitudes
    counts = np.bincount(idx, minlength=len(edges)).astype(np.int64)
    return Histogram(name, np.asarray(edges, dtype=np.float64), counts)


def sst_gradient_hist(state, geom, mask, bins=None, name="sst_gradient"):
    g = sst_gradient(state, geom, mask)
    if not np.any(np.isfinite(g)):
        raise NoValidStencil("no surface cell has an all-ocean gradient stencil")
    return histogram(g, histogram_edges() if bins is None else bins, name)


def ohc(state, geom, mask, z_max=100.0, rho=RHO, cp=CP):
    """rho cp integral_0^z_max T dz (J/m^2) by trapezoid; NaN for land or short columns."""
    T = _arr(state)
    T = T[0] if T.ndim == 4 else T
    m = _mask(mask)
    z = np.asarray(state.spec.depths, dtype=np.float64)
    D, H, W = m.shape
    out = np.full((H, W), np.nan)
    if z[0] > 0 or z[-1] < z_max:
        return out
    n_full = int(np.searchsorted(z, z_max, side="right"))  # levels with z <= z_max
    need = n_full if z[n_full - 1] == z_max else n_full + 1
    ok = m[:need].all(axis=0)
    Tn = np.where(m[:need], T[:need], 0.0)
    total = np.zeros((H, W))
    for k in range(n_full - 1):
        total += 0.5 * (Tn[k] + Tn[k + 1]) * (z[k + 1] - z[k])
    if z[n_full - 1] < z_max:
        k = n_full - 1
        frac = (z_max - z[k]) / (z[k + 1] - z[k])
        t_end = Tn[k] + frac * (Tn[k + 1] - Tn[k])
        total += 0.5 * (Tn[k] + t_end) * (z_max - z[k])
    out[ok] = rho * cp * total[ok]
    return out


def section_error(traj, truth, sec, lead, variable="thetao"):
    """Forecast-minus-truth section at ``lead``; ``truth`` maps lead -> state."""
    if lead not in traj.states:
        raise PairMismatch(f"lead {lead} beyond the trajectory horizon {traj.horizon}")
    if lead not in truth:
        raise PairMismatch(f"no truth at lead {lead}")
    f = extract_section(traj.states[lead], sec, variable)
    t = extract_section(truth[lead], sec, variable)
    return type(f)(f.name, f.variable, f.lat, f.row, f.columns, f.lons, f.depths, f.values - t.values)


def smooth_horizontal(data, mask, passes=1, periodic=True):
    """``passes`` masked 1-2-1 binomial filters in latitude and longitude.

    Each pass is a normalized convolution over ocean neighbours, so land
    never leaks in; land cells come back as NaN. ``data`` is (..., D, H, W).
    """
    m = _mask(mask)
    x = np.where(m, np.asarray(data, dtype=np.float64), 0.0)
    mf = m.astype(np.float64)

    def pass_(a, axis):
        if axis == -1 and periodic:
            return 0.25 * np.roll(a, 1, axis=-1) + 0.5 * a + 0.25 * np.roll(a, -1, axis=-1)
        out = 0.5 * a
        lo = [slice(None)] * a.ndim
        hi = [slice(None)] * a.ndim
        lo[axis], hi[axis] = slice(1, None), slice(None, -1)
        out[tuple(lo)] += 0.25 * a[tuple(hi)]
        out[tuple(hi)] += 0.25 * a[tuple(lo)]
        return out

    for _ in range(passes):
        num, den = x * mf, mf
        for axis in (-2, -1):
            num, den = pass_(num, axis), pass_(den, axis)
        x = np.where(m, num / np.where(den > 0, den, 1.0), 0.0)
    return np.where(m, x, np.nan)


def upper_tail_mass(values, threshold):
    """Number of finite values strictly above ``threshold``."""
    v = np.asarray(values, dtype=np.float64)
    return int(np.sum(np.isfinite(v) & (v > threshold)))


def _truth_for(traj, truth_lookup):
    out = {}
    for lead in traj.states:
        day = traj.init_day + lead
        state = truth_lookup(day)
        if state is None:
            raise PairMismatch(f"no truth for day {day} (init {traj.init_day}, lead {lead})")
        out[lead] = state
    return out


def build_report(suite, truth_lookup, mask, geom, w, clim=None, bins=None,
                 sections=REGIONAL_SECTIONS, per_depth=True):
    """Evaluate [(init_day, Trajectory)] against truth into a MetricReport.

    ``truth_lookup(day)`` returns the true state for an absolute day (or
    None). Lead-0 states are excluded from curves. Scalars are computed over
    every forecast state of every trajectory, with truth counterparts under a
    ``_truth`` suffix; the histogram, OHC error and sections use the final
    lead, averaged over initializations where that makes sense.
    """
    rep = MetricReport()
    if not suite:
        return rep
    spec = mask.spec
    trajs = [t for _, t in suite]
    fcs = [{k: s for k, s in t.states.items() if k >= 1} for t in trajs]
    trs = [_truth_for(t, truth_lookup) for t in trajs]
    horizon = min(max(f) for f in fcs)
    depths = list(spec.depths)

    curves = rmse(fcs, trs, mask, w)
    if per_depth:
        curves.update(rmse(fcs, trs, mask, w, per_depth=True))
    for (v, k), pts in curves.items():
        rep.curves.append(Curve("rmse", v, k if k == ALL_DEPTHS else depths[k], pts, "state units"))
    if clim is not None:
        undefined = []
        for v, pts in acc(fcs, trs, clim, mask, w, undefined=undefined).items():
            rep.curves.append(Curve("acc", v, ALL_DEPTHS, pts, "1"))
        rep.notes += [f"ACC undefined for {v} at lead {lead}" for v, lead in undefined]

    fc_series = [s for f in fcs for _, s in sorted(f.items())]
    tr_series = [trs[i][k] for i, f in enumerate(fcs) for k in sorted(f)]
    for label, series in (("", fc_series), ("_truth", tr_series)):
        if len(series) >= 2:
            rep.scalars["eke" + label] = (eke(series, geom, mask), "m^5 s^-2")
        rep.scalars["t_variance" + label] = (field_variance(series, geom, mask, "thetao"), "degC^2 m^3")
        rep.scalars["s_variance" + label] = (field_variance(series, geom, mask, "so"), "psu^2 m^3")

    edges = histogram_edges() if bins is None else np.asarray(bins, dtype=np.float64)
    for name, states in (("forecast", [f[horizon] for f in fcs]), ("truth", [t[horizon] for t in trs])):
        counts = sum(sst_gradient_hist(s, geom, mask, edges).counts for s in states)
        rep.histograms.append(Histogram(name, edges, counts))

    err = np.mean([ohc(f[horizon], geom, mask) - ohc(t[horizon], geom, mask) for f, t in zip(fcs, trs)], axis=0)
    rep.fields.append(Field2D("ohc_error", spec.lats, spec.lons % 360.0, err, "J m^-2"))

    for sec in sections.values():
        try:
            errs = [section_error(traj, tr, sec, horizon) for traj, tr in zip(trajs, trs)]
        except OutOfDomain as exc:
            rep.notes.append(f"section {sec.name} skipped: {exc}")
            continue
        first = errs[0]
        mean = np.mean([e.values for e in errs], axis=0)
        rep.sections.append((type(first)(first.name, first.variable, first.lat, first.row, first.columns,
                                         first.lons, first.depths, mean), "degC"))
    rep.provenance.update({"init_days": " ".join(str(d) for d, _ in suite), "horizon_days": horizon,
                           "section_lead_days": horizon})
    return rep
