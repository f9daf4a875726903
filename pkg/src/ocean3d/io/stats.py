"""Per-variable, per-depth normalisation statistics from the training split."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateVariance, EmptyManifest, FormatViolation, IoFailure
from ..grid import FORCING_VARS, OCEAN_VARS
from .ogf import read_ogf


@dataclass(frozen=True)
class NormStats:
    """Population (1/N) z-score statistics.

    ``mean``/``std``/``count`` are (V, D) over time and mask-valid cells;
    ``forcing_mean``/``forcing_std`` are per forcing channel over all cells.
    """

    mean: np.ndarray
    std: np.ndarray
    count: np.ndarray
    forcing_mean: np.ndarray
    forcing_std: np.ndarray
    degenerate: tuple = field(default=())


def _exact_sum(partials):
    """Correctly rounded elementwise sum over the first axis (order independent)."""
    stacked = np.asarray(partials, dtype=np.float64)
    flat = stacked.reshape(stacked.shape[0], -1)
    return np.array([math.fsum(col) for col in flat.T]).reshape(stacked.shape[1:])


def _finish(mean, sq, count, labels):
    var = np.where(count > 0, sq / np.maximum(count, 1), 0.0)
    std = np.sqrt(var)
    bad = (count < 2) | ~(std > 0)
    degenerate = []
    for idx in zip(*np.nonzero(bad)):
        degenerate.append(labels(idx))
    std = np.where(bad, 1.0, std)
    return mean, std, degenerate


def norm_stats_from_fields(ocean_fields, forcing_fields, mask):
    """Two-pass statistics over iterables-of-arrays factories.

    ``ocean_fields`` and ``forcing_fields`` are zero-argument callables that
    each return a fresh iterator of (V, D, H, W) / (8, H, W) arrays, because
    the mean is needed before the second pass.
    """
    m = np.asarray(mask.data, dtype=bool)
    msum = lambda a: np.where(m[None], a, 0.0).sum(axis=(2, 3))

    sums = [msum(a) for a in ocean_fields()]
    if not sums:
        raise EmptyManifest("no training snapshots for normalisation statistics")
    count = np.broadcast_to(len(sums) * m.sum(axis=(1, 2)).astype(np.float64), sums[0].shape).copy()
    mean = np.where(count > 0, _exact_sum(sums) / np.maximum(count, 1), 0.0)
    sq = _exact_sum([msum((a - mean[:, :, None, None]) ** 2) for a in ocean_fields()])

    f_sums = [np.asarray(a).sum(axis=(1, 2)) for a in forcing_fields()]
    if f_sums:
        n_lat, n_lon = m.shape[1:]
        f_count = np.full(len(FORCING_VARS), float(len(f_sums) * n_lat * n_lon))
        f_mean = _exact_sum(f_sums) / f_count
        f_sq = _exact_sum([((a - f_mean[:, None, None]) ** 2).sum(axis=(1, 2)) for a in forcing_fields()])
    else:
        f_count = f_mean = f_sq = np.zeros(len(FORCING_VARS))

    mean, std, degen = _finish(mean, sq, count, lambda ix: (OCEAN_VARS[ix[0]], int(ix[1])))
    f_mean, f_std, f_degen = _finish(f_mean, f_sq, f_count, lambda ix: (FORCING_VARS[ix[0]], None))
    degenerate = tuple(degen + f_degen)
    if degenerate:
        warnings.warn(f"degenerate variance for {list(degenerate)}; std clamped to 1", DegenerateVariance,
                      stacklevel=3)
    return NormStats(mean, std, count, f_mean, f_std, degenerate)


def compute_norm_stats(train_manifest, mask):
    if len(train_manifest) == 0:
        raise EmptyManifest("training split is empty")
    days = train_manifest.days
    oceans = lambda: (read_ogf(train_manifest.ocean_path(d)).data for d in days)
    forcings = lambda: (read_ogf(train_manifest.forcing_path(d)).data for d in days)
    return norm_stats_from_fields(oceans, forcings, mask)


_HEADER = ["kind", "variable", "depth_index", "mean", "std", "count"]


def write_norm_stats(stats, path):
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(_HEADER)
            V, D = stats.mean.shape
            for v in range(V):
                for k in range(D):
                    w.writerow(["ocean", OCEAN_VARS[v], k, repr(float(stats.mean[v, k])),
                                repr(float(stats.std[v, k])), repr(float(stats.count[v, k]))])
            for c, name in enumerate(FORCING_VARS):
                w.writerow(["forcing", name, "", repr(float(stats.forcing_mean[c])),
                            repr(float(stats.forcing_std[c])), ""])
            for var, k in stats.degenerate:
                w.writerow(["degenerate", var, "" if k is None else k, "", "", ""])
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_norm_stats(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    ocean = [r for r in rows if r["kind"] == "ocean"]
    forcing = [r for r in rows if r["kind"] == "forcing"]
    if not ocean or len(forcing) != len(FORCING_VARS):
        raise FormatViolation(f"{path} is not a normalisation-statistics file")
    D = 1 + max(int(r["depth_index"]) for r in ocean)
    mean = np.zeros((len(OCEAN_VARS), D))
    std = np.ones_like(mean)
    count = np.zeros_like(mean)
    for r in ocean:
        v, k = OCEAN_VARS.index(r["variable"]), int(r["depth_index"])
        mean[v, k], std[v, k], count[v, k] = float(r["mean"]), float(r["std"]), float(r["count"])
    f_mean = np.array([float(r["mean"]) for r in forcing])
    f_std = np.array([float(r["std"]) for r in forcing])
    degenerate = tuple((r["variable"], int(r["depth_index"]) if r["depth_index"] else None)
                       for r in rows if r["kind"] == "degenerate")
    return NormStats(mean, std, count, f_mean, f_std, degenerate)
