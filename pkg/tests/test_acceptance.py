"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
"""
import datetime as dt
import hashlib
import os
import time

import numpy as np
import pytest

from conftest import random_mask
from oracles import loop_acc, loop_eke, loop_mse, loop_rmse, loop_variance
from swin_reference import may_attend
from test_swin3d import SPEC as SWIN_SPEC
from test_swin3d import _one_hot_reach, random_stats, randomized, sample
from ocean3d.cli import main
from ocean3d.diagnostics import (ALL_DEPTHS, CP, RHO, acc, acc_value, eke, field_variance, ohc, rmse,
                                 smooth_horizontal, sst_gradient, upper_tail_mass)
from ocean3d.errors import ZeroAnomalyVariance
from ocean3d.grid import (EARTH_RADIUS, OCEAN_VARS, Grid3DSpec, LandSeaMask, OceanState, cell_geometry,
                          latitude_weights, regular_grid)
from ocean3d.io.manifest import DatasetManifest, ManifestEntry, epoch_day, read_manifest, split_dataset
from ocean3d.io.ogf import decode, encode, read_ogf
from ocean3d.io.report import read_csv_rows
from ocean3d.objective import apply_increment, climatology_from_states, weighted_increment_mse
from ocean3d.propagators.physics import SECONDS_PER_DAY, Advective, Persistence, advective_step
from ocean3d.propagators.swin3d import Swin3dConfig, Swin3dModel, cell_weights, translation_stride
from ocean3d.rollout import ForcingCache, plan_schedule, rollout, single_propagator_schedule
from ocean3d.synth import analytic_state, default_mask, desk_grid, SynthParams


def test_ac1_loss_oracle(verdict):
    with verdict(1, "loss oracle and invariances") as info:
        rng = np.random.default_rng(1)
        start = time.perf_counter()
        worst = 0.0
        for _ in range(100):
            V, D, H, W = (int(rng.integers(1, n + 1)) for n in (4, 4, 8, 8))
            p, t = rng.normal(size=(2, V, D, H, W))
            m = rng.random((D, H, W)) > 0.3
            m.flat[rng.integers(m.size)] = True
            w = rng.random(H) + 0.01
            got = weighted_increment_mse(p, t, m, w)
            ref = loop_mse(p, t, m, w)
            worst = max(worst, abs(got - ref) / ref)
            assert weighted_increment_mse(p, t, m, 5.0 * w) == pytest.approx(got, rel=1e-14)
            p0, p1 = p.copy(), p.copy()
            p0[:, ~m], p1[:, ~m] = 0.0, 1e9
            assert weighted_increment_mse(p0, t, m, w) == weighted_increment_mse(p1, t, m, w) == got
        elapsed = time.perf_counter() - start
        assert worst <= 1e-12
        assert elapsed < 5.0
        info["max_rel_err"] = f"{worst:.1e}"
        info["seconds"] = f"{elapsed:.2f}"


def test_ac2_gradient_check(verdict):
    with verdict(2, "finite-difference gradient check on every parameter") as info:
        cfg = Swin3dConfig(patch=(1, 2, 2), embed_dim=4, window=(2, 2, 2), levels=1, enc_depths=(2,),
                           mid_depth=2, dec_depths=(2,), heads=2, mlp_ratio=2, init_std=0.3)
        rng = np.random.default_rng(1)
        ps = randomized(cfg, SWIN_SPEC, rng)
        assert ps.count <= 5000
        model = Swin3dModel(cfg, SWIN_SPEC, random_stats(rng))
        shapes = [SWIN_SPEC.shape] * 2 + [(8, 8, 8)] * 2 + [SWIN_SPEC.shape]
        batch = tuple(rng.normal(size=(2,) + s) for s in shapes)
        weights = cell_weights(random_mask(SWIN_SPEC, rng), latitude_weights(SWIN_SPEC))
        start = time.perf_counter()
        _, g = model.loss_and_grad(ps, batch, weights)
        worst, bad = 0.0, []
        v = ps.values.copy()
        for j in range(ps.count):
            eps = 1e-4 * max(1.0, abs(ps.values[j]))
            v[j] = ps.values[j] + eps
            up = model.loss(ps, batch, weights, v)
            v[j] = ps.values[j] - eps
            down = model.loss(ps, batch, weights, v)
            v[j] = ps.values[j]
            num = (up - down) / (2 * eps)
            tol = max(1e-4 * max(abs(num), abs(g[j])), 1e-7)
            worst = max(worst, abs(num - g[j]) / tol)
            if abs(num - g[j]) > tol:
                bad.append(j)
        elapsed = time.perf_counter() - start
        assert not bad, f"{len(bad)} parameters disagree, first at {bad[:5]}"
        assert elapsed < 60.0
        info["params"] = ps.count
        info["worst_err_over_tol"] = f"{worst:.2e}"
        info["seconds"] = f"{elapsed:.1f}"


def test_ac3_shifted_window_isolation(verdict):
    with verdict(3, "shifted-window isolation and cyclic translation") as info:
        rng = np.random.default_rng(3)
        regional = Grid3DSpec(4, 4, 8, 8, SWIN_SPEC.lat0, SWIN_SPEC.d_lat, 0.0, 10.0, SWIN_SPEC.depths)
        checked = 0
        for spec, periodic in ((SWIN_SPEC, True), (regional, False)):
            cfg = Swin3dConfig(patch=(1, 2, 2), embed_dim=4, window=(2, 2, 2), levels=0, enc_depths=(),
                               mid_depth=2, dec_depths=(), heads=2, mlp_ratio=2, pos_embed=False)
            lev, reach = _one_hot_reach(cfg, spec, 0, True, rng)
            for p, hit in reach.items():
                expect = {q for q in np.ndindex(lev.grid)
                          if may_attend(p, q, lev.grid, lev.window, lev.shift, True, periodic)}
                assert hit == expect
                checked += 1
        cfg = Swin3dConfig(patch=(1, 2, 2), embed_dim=4, window=(2, 2, 2), levels=1, enc_depths=(2,), mid_depth=2,
                           dec_depths=(2,), heads=2, mlp_ratio=2, pos_embed=False)
        spec = regular_grid((0.0, 10.0, 30.0, 60.0), 8, 16, lat_range=(-40.0, 40.0))
        s = translation_stride(cfg, spec)
        model = Swin3dModel(cfg, spec, random_stats(rng))
        ps = randomized(cfg, spec, rng)
        xp, xt, fp, ft = (a.data[None] for a in sample(rng, spec))
        out = model.forward(ps, xp, xt, fp, ft)
        roll = lambda a: np.roll(a, s, axis=-1)
        assert np.array_equal(model.forward(ps, roll(xp), roll(xt), roll(fp), roll(ft)), roll(out))
        info["tokens_probed"] = checked
        info["lon_shift_cells"] = s


def test_ac4_rollout_identities(verdict, tiny_dataset):
    with verdict(4, "rollout identities") as info:
        _, _, manifest, _ = tiny_dataset
        forcing = ForcingCache(manifest)
        pair = (read_ogf(manifest.ocean_path(4)), read_ogf(manifest.ocean_path(5)))
        props = {"fm1": Persistence(1), "fm5": Persistence(5)}
        ref = pair[1].data.tobytes()
        for h in range(1, 31):
            for sched in (plan_schedule(h), single_propagator_schedule(h)):
                produced = sched.produced_days()
                assert sorted(produced) == list(range(1, h + 1)) and len(produced) == h
            traj = rollout(pair, forcing, props, plan_schedule(h))
            assert all(traj.states[d].data.tobytes() == ref for d in range(h + 1))
        traj = rollout(pair, forcing, {"fm1": Advective(kappa=500.0)}, single_propagator_schedule(3))
        prev, cur = pair
        for k in range(3):
            d = advective_step(prev, cur, forcing[5 + k - 1], forcing[5 + k], kappa=500.0)
            prev, cur = cur, apply_increment(cur, d)
            assert traj.states[k + 1].data.tobytes() == cur.data.tobytes()
        info["horizons"] = "1..30"


def test_ac5_diagnostics_oracles(verdict):
    with verdict(5, "diagnostics oracles") as info:
        rng = np.random.default_rng(5)
        spec = regular_grid((0.0, 10.0, 30.0), 4, 6, lat_range=(-45.0, 45.0))
        geom = cell_geometry(spec)
        w = latitude_weights(spec)
        mask = random_mask(spec, rng, p_land=0.3)
        st = lambda t: OceanState(spec, t, rng.normal(size=spec.shape))
        fcs = [{1: st(1), 2: st(2)} for _ in range(2)]
        trs = [{1: st(1), 2: st(2)} for _ in range(2)]
        out = rmse(fcs, trs, mask, w, per_depth=True)
        out.update(rmse(fcs, trs, mask, w))
        worst = 0.0
        for (v, k), curve in out.items():
            for lead, val in curve.items():
                ref = np.mean([loop_rmse(f[lead].data, t[lead].data, mask.data, w, OCEAN_VARS.index(v),
                                         None if k == ALL_DEPTHS else k) for f, t in zip(fcs, trs)])
                worst = max(worst, abs(val - ref) / ref)
        clim = climatology_from_states([st(t) for t in range(3)], LandSeaMask.all_ocean(spec))
        accs = acc(fcs, trs, clim, mask, w)
        for iv, v in enumerate(OCEAN_VARS):
            for lead in (1, 2):
                cs = [clim.state(lead).data] * 2
                ref = loop_acc([f[lead].data for f in fcs], [t[lead].data for t in trs], cs, mask.data, w, iv)
                worst = max(worst, abs(accs[v][lead] - ref) / abs(ref))
        series = [st(t) for t in range(3)]
        ref = loop_eke([s.data for s in series], geom.volume, mask.data)
        worst = max(worst, abs(eke(series, geom, mask) - ref) / ref)
        ref = loop_variance([s.data[0] for s in series], geom.volume, mask.data)
        worst = max(worst, abs(field_variance(series, geom, mask, "thetao") - ref) / ref)
        assert worst <= 1e-12

        n_defined = 0
        for _ in range(1000):
            n = int(rng.integers(1, 40))
            f, o = rng.normal(size=(2, n)) * 10.0 ** rng.integers(-5, 5, size=(2, 1))
            try:
                val = acc_value(f, o, rng.random(n))
            except ZeroAnomalyVariance:
                continue
            assert -1.0 <= val <= 1.0
            n_defined += 1

        ospec = regular_grid((0.0, 50.0, 100.0), 2, 4)
        og, om = cell_geometry(ospec), LandSeaMask.all_ocean(ospec)
        one = ohc(OceanState(ospec, 0, np.ones(ospec.shape)), og, om)
        assert np.all(np.abs(one / 408_462_500.0 - 1) <= 1e-9)
        lin = np.zeros(ospec.shape)
        lin[0] = np.array([2.0, 1.0, 0.0])[:, None, None]
        assert np.all(np.abs(ohc(OceanState(ospec, 0, lin), og, om) / (RHO * CP * 100) - 1) <= 1e-9)

        sspec = regular_grid((0.0, 10.0), 8, 16, lat_range=(-40.0, 40.0))
        a = 3e-6
        sst = np.zeros(sspec.shape)
        sst[0] = a * EARTH_RADIUS * np.deg2rad(sspec.lats)[None, :, None]
        g = sst_gradient(OceanState(sspec, 0, sst), cell_geometry(sspec), LandSeaMask.all_ocean(sspec))
        assert np.all(np.abs(g[1:-1] / a - 1) <= 1e-12)
        info["max_rel_err"] = f"{worst:.1e}"
        info["acc_cases_defined"] = n_defined


def test_ac6_advective_physics(verdict):
    with verdict(6, "advective surrogate conservation and linear advection") as info:
        rng = np.random.default_rng(6)
        spec = regular_grid((0.0, 20.0, 50.0), 8, 16, lat_range=(-40.0, 40.0))
        geom = cell_geometry(spec)
        worst = 0.0
        for _ in range(20):
            mask = random_mask(spec, rng, p_land=0.3)
            data = rng.normal(size=spec.shape)
            data[0] += 15.0
            data[2:] *= 0.2
            x = OceanState(spec, 0, data).masked(mask)
            f = advective_step(x, x, _zero_forcing(spec), _zero_forcing(spec), kappa=2000.0, gamma=0.0, mask=mask)
            for v in (0, 1):
                terms = np.where(mask.data, f.data[v] * geom.volume, 0.0)
                worst = max(worst, abs(terms.sum()) / np.abs(terms).sum())
        assert worst <= 1e-10

        regional = Grid3DSpec(4, 3, 6, 10, -12.5, 5.0, 140.0, 2.0, (0.0, 20.0, 50.0))
        a, u0 = 2e-6, 0.3
        lam = np.deg2rad(regional.lons - regional.lon0)
        data = np.zeros(regional.shape)
        data[0] = a * EARTH_RADIUS * np.cos(np.deg2rad(regional.lats))[None, :, None] * lam[None, None, :]
        data[2] = u0
        x = OceanState(regional, 0, data)
        d = advective_step(x, x, _zero_forcing(regional), _zero_forcing(regional), kappa=0.0)
        want = -u0 * a * SECONDS_PER_DAY
        lin = float(np.max(np.abs(d.data[0][:, :, 1:-1] / want - 1)))
        assert lin <= 1e-10
        info["conservation_rel"] = f"{worst:.1e}"
        info["linear_rel"] = f"{lin:.1e}"


def _zero_forcing(spec):
    from ocean3d.grid import ForcingState
    return ForcingState(spec.surface(), 0, np.zeros((8, spec.n_lat, spec.n_lon)))


# First verified run gave 0.0104 against 0.0538 for persistence; pinned with headroom.
PINNED_DAY1_RMSE = 0.02


def test_ac7_end_to_end_desk_experiment(verdict, tmp_path):
    with verdict(7, "end-to-end desk experiment beats persistence at day 1") as info:
        start = time.perf_counter()
        data, model, fc, ev = (str(tmp_path / n) for n in ("data", "model", "fc", "ev"))
        assert main(["synth", "--out", data]) == 0
        assert main(["train", "--data", data, "--out", model, "--lead", "1"]) == 0
        assert main(["train", "--data", data, "--out", model, "--lead", "5"]) == 0
        assert main(["forecast", "--data", data, "--out", fc, "--model-dir", model, "--horizon", "10"]) == 0
        assert main(["evaluate", "--data", data, "--out", ev, "--forecasts", fc, "--against", "persistence"]) == 0
        elapsed = time.perf_counter() - start

        manifest = read_manifest(os.path.join(data, "manifest.txt"))
        train, _, test = split_dataset(manifest, 199, 209)
        assert (len(train), len(test)) == (200, 30)
        rows = read_csv_rows(os.path.join(ev, "rmse_comparison.csv"))
        day1 = [r for r in rows if r["lead_days"] == "1" and r["variable"] == "thetao" and r["depth_m"] == "all"][0]
        model_rmse, base_rmse = float(day1["model"]), float(day1["persistence"])
        gain = 1 - model_rmse / base_rmse
        assert gain >= 0.20, f"day-1 thetao gain {gain:.1%}"
        assert model_rmse <= PINNED_DAY1_RMSE, f"day-1 thetao RMSE {model_rmse:.4f} regressed"

        mask = read_ogf(os.path.join(data, "mask.ogf"))
        fc_rows = read_csv_rows(os.path.join(fc, "forecast_manifest.csv"))
        leads = sorted({int(r["lead_days"]) for r in fc_rows})
        assert leads == list(range(1, 11))
        assert {r["propagator"] for r in fc_rows if int(r["lead_days"]) > 5} == {"fm5"}
        for r in fc_rows:
            state = read_ogf(os.path.join(fc, r["file"]))
            assert np.all(np.isfinite(state.data[:, mask.data]))
        assert elapsed < 600
        info["day1_rmse_model"] = f"{model_rmse:.4f}"
        info["persistence"] = f"{base_rmse:.4f}"
        info["gain"] = f"{gain:.0%}"
        info["seconds"] = f"{elapsed:.0f}"


def test_ac8_smoothing_detection(verdict):
    with verdict(8, "smoothing lowers EKE, variance and SST-gradient tail") as info:
        spec = desk_grid()
        p = SynthParams(spec=spec)
        mask = default_mask(spec)
        geom = cell_geometry(spec)
        truth = [analytic_state(p, t).masked(mask).data for t in range(0, 40, 4)]
        grads0 = np.concatenate([sst_gradient(OceanState(spec, 0, x), geom, mask).ravel() for x in truth])
        threshold = float(np.nanpercentile(grads0, 90))
        rows = []
        for passes in range(5):
            sm = [smooth_horizontal(x, mask, passes) for x in truth]
            g = np.concatenate([sst_gradient(OceanState(spec, 0, x), geom, mask).ravel() for x in sm])
            rows.append((eke(sm, geom, mask), field_variance(sm, geom, mask, "thetao"),
                         upper_tail_mass(g, threshold)))
        for a, b in zip(rows, rows[1:]):
            assert b[0] < a[0] and b[1] < a[1] and b[2] < a[2]
        info["eke_ratio_4_passes"] = f"{rows[-1][0] / rows[0][0]:.3f}"
        info["tail_counts"] = "/".join(str(r[2]) for r in rows)


def test_ac9_io(verdict):
    with verdict(9, "OGF round trip and calendar split") as info:
        rng = np.random.default_rng(9)
        specials = np.array([np.nan, 0.0, -0.0, np.inf, -np.inf, 1e-45, 3.4e38], dtype=np.float32)
        for _ in range(200):
            d, h, w = (int(rng.integers(1, n)) for n in (6, 9, 9))
            spec = regular_grid(tuple(5.0 * k for k in range(d)), h, w)
            vals = rng.normal(size=spec.shape).astype(np.float32) * np.float32(10.0 ** rng.integers(-30, 30))
            pick = rng.random(spec.shape) < 0.2
            vals[pick] = rng.choice(specials, size=int(pick.sum()))
            state = OceanState(spec, int(rng.integers(-10 ** 6, 10 ** 6)), vals)
            back = decode(encode(state))
            assert back.data.tobytes() == state.data.tobytes()
            assert back.spec == spec and back.time == state.time
        days = range(epoch_day(dt.date(1993, 1, 1)), epoch_day(dt.date(2020, 12, 31)) + 1)
        m = DatasetManifest(tuple(ManifestEntry(d, f"o{d}", f"f{d}") for d in days))
        parts = split_dataset(m, epoch_day(dt.date(2018, 12, 31)), epoch_day(dt.date(2019, 12, 31)))
        sizes = tuple(len(x) for x in parts)
        assert sizes == (9496, 365, 366)
        info["split"] = "/".join(map(str, sizes))


def _digest(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for name in files:
            path = os.path.join(dirpath, name)
            with open(path, "rb") as fh:
                out[os.path.relpath(path, root)] = hashlib.sha256(fh.read()).hexdigest()
    return out


def test_ac10_determinism(verdict, tmp_path):
    with verdict(10, "every subcommand reruns byte-identically") as info:
        data, clim, stats, model, fc, ev = (str(tmp_path / n) for n in ("data", "clim", "stats", "model", "fc", "ev"))
        split = ["--train-end", "19", "--valid-end", "22"]
        small = ["--patch", "2,2,2", "--embed-dim", "8", "--window", "2,2,2", "--levels", "1",
                 "--enc-depths", "1", "--mid-depth", "1", "--dec-depths", "1", "--heads", "2", "--mlp-ratio", "2",
                 "--epochs-stage1", "1", "--epochs-stage2", "1", "--stage1-days", "10", "--seed", "11"]
        runs = [
            ("synth", data, ["synth", "--out", data, "--days", "30", "--n-lat", "8", "--n-lon", "16",
                             "--lat-min", "-40", "--lat-max", "40", "--depths", "0,10,30,60", "--noise-amp",
                             "0.01", "--seed", "5"]),
            ("stats", stats, ["stats", "--data", data, "--out", stats] + split),
            ("climatology", clim, ["climatology", "--data", data, "--out", clim, "--clim-window", "3"] + split),
            ("train", model, ["train", "--data", data, "--out", model, "--lead", "1"] + split + small),
            ("forecast", fc, ["forecast", "--data", data, "--out", fc, "--model-dir", model, "--horizon", "4"]
             + split),
            ("evaluate", ev, ["evaluate", "--data", data, "--out", ev, "--forecasts", fc, "--climatology", clim,
                              "--against", "persistence"] + split),
        ]
        n_files = 0
        for name, out, argv in runs:
            assert main(argv) == 0, name
            first = _digest(out)
            assert main(argv) == 0, name
            assert _digest(out) == first, f"{name} output changed on rerun"
            n_files += len(first)
        info["files_compared"] = n_files
