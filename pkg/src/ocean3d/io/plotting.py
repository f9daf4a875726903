"""Deterministic SVG charts for report curves and histograms."""
from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed ids and no timestamp so reruns give identical bytes
plt.rcParams["svg.hashsalt"] = "ocean3d"
plt.rcParams["svg.fonttype"] = "none"
_META = {"Date": None, "Creator": "ocean3d"}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)


def line_chart(curves, path, title, ylabel):
    fig, ax = plt.subplots(figsize=(6, 4))
    for c in curves:
        xs = sorted(c.points)
        label = c.variable if c.depth in (None, "all") else f"{c.variable} {c.depth:g} m"
        ax.plot(xs, [c.points[x] for x in xs], marker="o", label=label)
    ax.set_xlabel("lead (days)")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if curves:
        ax.legend(fontsize="small")
    _save(fig, path)


def histogram_chart(hist, path, title):
    fig, ax = plt.subplots(figsize=(6, 4))
    edges = np.asarray(hist.edges)
    width = edges[1] - edges[0] if len(edges) > 1 else 1.0
    ax.bar(edges[:-1], hist.counts[:-1], width=width, align="edge")
    ax.bar([edges[-1]], [hist.counts[-1]], width=width, align="edge", color="gray", label="overflow")
    ax.set_xlabel(f"|grad SST| ({hist.unit})")
    ax.set_ylabel("cells")
    ax.set_title(title)
    ax.legend(fontsize="small")
    _save(fig, path)


def render_report(report, out_dir):
    """Write one chart per curve family (split by variable) and per histogram; returns file names."""
    names = []
    for metric, ylabel in (("rmse", "RMSE"), ("acc", "ACC")):
        fam = report.curve_family(metric)
        for var in sorted({c.variable for c in fam}):
            name = f"{metric}_{var}.svg"
            line_chart([c for c in fam if c.variable == var], os.path.join(out_dir, name),
                       f"{metric.upper()} {var}", ylabel)
            names.append(name)
    for i, h in enumerate(report.histograms):
        name = "sst_gradient_hist.svg" if i == 0 else f"sst_gradient_hist_{h.name}.svg"
        histogram_chart(h, os.path.join(out_dir, name), f"SST gradient ({h.name})")
        names.append(name)
    return names
