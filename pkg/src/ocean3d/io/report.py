"""CSV and SVG emission for a MetricReport.

Files (only those with content are written):

* ``rmse.csv``: lead_days,variable,depth_m,value (depth_m "all" = column aggregate)
* ``acc.csv``: lead_days,variable,value
* ``scalars.csv``: metric,value
* ``sst_gradient_hist.csv`` (+ ``sst_gradient_hist_{name}.csv`` for extra histograms): bin_lo,bin_hi,count
* ``ohc_error.csv`` (+ other 2D fields as ``{name}.csv``): lat,lon,value
* ``section_{name}.csv``: depth_m,lon,value
* free-form comparison tables carried in ``report.tables``
* one SVG chart per curve family and per histogram
* ``report_manifest.txt`` listing every file with its row count
"""
from __future__ import annotations

import csv
import os

from ..errors import IoFailure

_FMT = repr


def _num(x):
    return x if isinstance(x, str) else _FMT(float(x))


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return len(rows)


def _depth_label(depth):
    return depth if isinstance(depth, str) else _num(depth)


def write_report(report, out_dir, charts=True):
    """Write ``report`` into ``out_dir``; returns {file name: data rows}."""
    written = {}
    try:
        os.makedirs(out_dir, exist_ok=True)
        rmse = report.curve_family("rmse")
        if rmse:
            rows = [(lead, c.variable, _depth_label(c.depth), _num(v))
                    for c in rmse for lead, v in sorted(c.points.items())]
            written["rmse.csv"] = _write_csv(os.path.join(out_dir, "rmse.csv"),
                                             ["lead_days", "variable", "depth_m", "value"], rows)
        acc = report.curve_family("acc")
        if acc:
            rows = [(lead, c.variable, _num(v)) for c in acc for lead, v in sorted(c.points.items())]
            written["acc.csv"] = _write_csv(os.path.join(out_dir, "acc.csv"),
                                            ["lead_days", "variable", "value"], rows)
        if report.scalars:
            rows = [(name, _num(val)) for name, (val, _unit) in report.scalars.items()]
            written["scalars.csv"] = _write_csv(os.path.join(out_dir, "scalars.csv"), ["metric", "value"], rows)
        for i, h in enumerate(report.histograms):
            name = "sst_gradient_hist.csv" if i == 0 else f"sst_gradient_hist_{h.name}.csv"
            rows = [(_num(lo), _num(hi), int(c)) for lo, hi, c in h.bins]
            written[name] = _write_csv(os.path.join(out_dir, name), ["bin_lo", "bin_hi", "count"], rows)
        for f in report.fields:
            rows = [(_num(f.lats[i]), _num(f.lons[j]), _num(f.values[i, j]))
                    for i in range(len(f.lats)) for j in range(len(f.lons))]
            name = f"{f.name}.csv"
            written[name] = _write_csv(os.path.join(out_dir, name), ["lat", "lon", "value"], rows)
        for sec, _unit in report.sections:
            rows = [(_num(sec.depths[k]), _num(sec.lons[j]), _num(sec.values[k, j]))
                    for k in range(len(sec.depths)) for j in range(len(sec.lons))]
            name = f"section_{sec.name}.csv"
            written[name] = _write_csv(os.path.join(out_dir, name), ["depth_m", "lon", "value"], rows)
        for name, header, rows in report.tables:
            written[name] = _write_csv(os.path.join(out_dir, name), header, rows)
        if charts and not report.is_empty():
            from . import plotting
            for name in plotting.render_report(report, out_dir):
                written[name] = None
        with open(os.path.join(out_dir, "report_manifest.txt"), "w") as fh:
            for key, value in report.provenance.items():
                fh.write(f"# {key} = {value}\n")
            for name in sorted(written):
                rows = written[name]
                fh.write(f"{name}\t{'chart' if rows is None else rows}\n")
    except OSError as exc:
        raise IoFailure(f"cannot write report to {out_dir}: {exc}") from exc
    return written


def read_csv_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def rmse_table(path):
    """{(variable, depth_m, lead): value} from an ``rmse.csv``."""
    out = {}
    for r in read_csv_rows(path):
        out[(r["variable"], r["depth_m"], int(r["lead_days"]))] = float(r["value"])
    return out

