"""Batch entry point: ``ocean3d {synth,stats,climatology,train,forecast,evaluate}``.

Settings come from defaults, then an optional ``key = value`` file given
with ``--config``, then command-line flags (``--some-key`` for
``some_key``). The effective settings are echoed to ``run_config.txt`` in
the output directory. Exit codes: 0 success, 2 configuration error, 3
runtime error.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass

from .errors import ConfigError, Ocean3dError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _bool(s):
    low = str(s).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _ints(s):
    return tuple(int(v) for v in str(s).replace(",", " ").split())


def _floats(s):
    return tuple(float(v) for v in str(s).replace(",", " ").split())


def _u64(s):
    v = int(s)
    if not 0 <= v < 2 ** 64:
        raise ValueError("seed must fit in an unsigned 64-bit integer")
    return v


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return " ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


@dataclass(frozen=True)
class Key:
    name: str
    parse: object
    default: object
    commands: tuple
    help: str = ""


ALL = ("synth", "stats", "climatology", "train", "forecast", "evaluate")
DATA = ("stats", "climatology", "train", "forecast", "evaluate")
KEYS = [
    Key("out", str, None, ALL, "output directory"),
    Key("seed", _u64, 0, ALL, "single source of randomness"),
    Key("threads", int, 1, ALL, "cap on BLAS worker threads"),
    Key("data", str, None, DATA, "dataset directory holding manifest.txt and mask.ogf"),
    Key("train_end", int, 199, DATA, "last training day (inclusive)"),
    Key("valid_end", int, 209, DATA, "last validation day (inclusive)"),
    # synth
    Key("days", int, 240, ("synth",), "number of daily snapshots"),
    Key("start_day", int, 0, ("synth",), "first day index (days since 1970-01-01)"),
    Key("n_lat", int, 32, ("synth",)),
    Key("n_lon", int, 64, ("synth",)),
    Key("lat_min", float, -60.0, ("synth",)),
    Key("lat_max", float, 60.0, ("synth",)),
    Key("depths", _floats, (0.0, 10.0, 30.0, 60.0, 100.0, 180.0, 350.0, 643.0), ("synth",)),
    Key("anomaly_amp", float, 2.0, ("synth",), "degC"),
    Key("period_days", float, 100.0, ("synth",), "days for the anomaly to travel one wavelength"),
    Key("noise_amp", float, 0.0, ("synth",)),
    # climatology
    Key("clim_window", int, 1, ("climatology",), "centred running-mean window in days"),
    # train
    Key("lead", int, 1, ("train",), "target lead in days"),
    Key("patch", _ints, (2, 4, 4), ("train",)),
    Key("embed_dim", int, 32, ("train",)),
    Key("window", _ints, (2, 4, 4), ("train",)),
    Key("levels", int, 2, ("train",)),
    Key("enc_depths", _ints, (2, 2), ("train",)),
    Key("mid_depth", int, 2, ("train",)),
    Key("dec_depths", _ints, (2, 2), ("train",)),
    Key("heads", int, 4, ("train",)),
    Key("mlp_ratio", float, 4.0, ("train",)),
    Key("pos_embed", _bool, True, ("train",)),
    Key("init_std", float, 0.02, ("train",)),
    Key("lr", float, 1e-3, ("train",)),
    Key("beta1", float, 0.9, ("train",)),
    Key("beta2", float, 0.999, ("train",)),
    Key("adam_eps", float, 1e-8, ("train",)),
    Key("batch_size", int, 4, ("train",)),
    Key("epochs_stage1", int, 2, ("train",)),
    Key("epochs_stage2", int, 4, ("train",)),
    Key("stage1_days", int, 100, ("train",), "leading training days used in stage 1"),
    Key("clip", float, 1.0, ("train",), "gradient-norm clip"),
    # forecast
    Key("propagator", str, "swin3d", ("forecast",), "swin3d | persistence | advective | climatology_nudge"),
    Key("model_dir", str, None, ("forecast",), "directory with fm1.ogpw (and fm5.ogpw) from train"),
    Key("horizon", int, 10, ("forecast",)),
    Key("init_days", _ints, (), ("forecast",), "initialization days; empty: every test day with full truth"),
    Key("kappa", float, 1000.0, ("forecast",), "advective diffusivity, m^2/s"),
    Key("gamma", float, 0.0, ("forecast",), "advective wind coupling, 1/s"),
    Key("alpha", float, 0.1, ("forecast",), "climatology nudging weight"),
    Key("climatology", str, None, ("forecast", "evaluate"), "climatology directory"),
    # evaluate
    Key("forecasts", str, None, ("evaluate",), "forecast directory from the forecast command"),
    Key("against", str, "none", ("evaluate",), "none | persistence"),
    Key("hist_bins", int, 64, ("evaluate",)),
    Key("hist_max", float, 5e-4, ("evaluate",), "upper edge of the uniform SST-gradient bins, K/m"),
    Key("per_depth", _bool, True, ("evaluate",)),
]
REGISTRY = {k.name: k for k in KEYS}


def keys_for(command):
    return [k for k in KEYS if command in k.commands]


def parse_config_file(path):
    """``key = value`` lines; ``#`` starts a comment."""
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    out = {}
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def resolve(command, file_values, flag_values):
    """Defaults < file < flags, each value validated by the registry."""
    allowed = {k.name: k for k in keys_for(command)}
    cfg = {name: k.default for name, k in allowed.items()}
    for source, values in (("config file", file_values), ("flag", flag_values)):
        for name, raw in values.items():
            if name not in allowed:
                where = "known to another command" if name in REGISTRY else "unknown"
                raise ConfigError(f"{source} key {name!r} is {where} for {command!r}")
            try:
                cfg[name] = allowed[name].parse(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value {raw!r} for {name!r}: {exc}") from exc
    return cfg


def echo_config(command, cfg, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "run_config.txt"), "w") as fh:
        fh.write(f"# ocean3d {command}\n")
        for name in sorted(cfg):
            fh.write(f"{name} = {_fmt(cfg[name])}\n")


def write_key_values(path, values):
    with open(path, "w") as fh:
        for name in sorted(values):
            fh.write(f"{name} = {_fmt(values[name])}\n")


def _require(cfg, *names):
    for n in names:
        if cfg.get(n) in (None, ""):
            raise ConfigError(f"--{n.replace('_', '-')} is required")


# ---------------------------------------------------------------------------
# commands


def _load_data(cfg):
    from .errors import BadBoundary
    from .io.manifest import read_manifest, split_dataset
    from .io.ogf import read_ogf

    _require(cfg, "data")
    manifest = read_manifest(os.path.join(cfg["data"], "manifest.txt"))
    try:
        splits = split_dataset(manifest, cfg["train_end"], cfg["valid_end"])
    except BadBoundary as exc:
        raise ConfigError(str(exc)) from exc
    mask = read_ogf(os.path.join(cfg["data"], "mask.ogf"))
    return manifest, splits, mask


def cmd_synth(cfg):
    from .grid import regular_grid
    from .synth import DEFAULT_WAVELENGTH, SynthParams, default_mask, gen_dataset

    if cfg["days"] < 1:
        raise ConfigError("--days must be >= 1")
    if cfg["period_days"] == 0:
        raise ConfigError("--period-days must be non-zero")
    spec = regular_grid(cfg["depths"], cfg["n_lat"], cfg["n_lon"], lat_range=(cfg["lat_min"], cfg["lat_max"]))
    p = SynthParams(spec=spec, anomaly_amp=cfg["anomaly_amp"], phase_speed=DEFAULT_WAVELENGTH / cfg["period_days"],
                    noise_amp=cfg["noise_amp"], seed=cfg["seed"])
    gen_dataset(p, range(cfg["start_day"], cfg["start_day"] + cfg["days"]), default_mask(spec), cfg["out"])


def cmd_stats(cfg):
    from .io.stats import compute_norm_stats, write_norm_stats

    _, (train, _, _), mask = _load_data(cfg)
    write_norm_stats(compute_norm_stats(train, mask), os.path.join(cfg["out"], "norm_stats.csv"))


def cmd_climatology(cfg):
    from .objective import build_climatology, write_climatology

    if cfg["clim_window"] < 1:
        raise ConfigError("--clim-window must be >= 1")
    _, (train, _, _), mask = _load_data(cfg)
    write_climatology(build_climatology(train, mask, cfg["clim_window"]), cfg["out"])


def _swin_config(cfg):
    from .errors import ConfigIncompatible
    from .propagators.swin3d import Swin3dConfig

    try:
        return Swin3dConfig(patch=cfg["patch"], embed_dim=cfg["embed_dim"], window=cfg["window"],
                            levels=cfg["levels"], enc_depths=cfg["enc_depths"], mid_depth=cfg["mid_depth"],
                            dec_depths=cfg["dec_depths"], heads=cfg["heads"], mlp_ratio=cfg["mlp_ratio"],
                            pos_embed=cfg["pos_embed"], seed=cfg["seed"], init_std=cfg["init_std"])
    except ConfigIncompatible as exc:
        raise ConfigError(str(exc)) from exc


MODEL_KEYS = ("patch", "embed_dim", "window", "levels", "enc_depths", "mid_depth", "dec_depths", "heads",
              "mlp_ratio", "pos_embed", "init_std", "seed", "lead")


def model_name(lead):
    return f"fm{lead}"


def cmd_train(cfg):
    from .io.stats import compute_norm_stats, write_norm_stats
    from .propagators.params import save_params
    from .propagators.train import TrainConfig, train, write_train_log

    lead = cfg["lead"]
    if lead < 1:
        raise ConfigError(f"--lead must be >= 1, got {lead}")
    scfg = _swin_config(cfg)
    try:
        tcfg = TrainConfig(lr=cfg["lr"], beta1=cfg["beta1"], beta2=cfg["beta2"], eps=cfg["adam_eps"],
                           batch_size=cfg["batch_size"], epochs_stage1=cfg["epochs_stage1"],
                           epochs_stage2=cfg["epochs_stage2"], stage1_days=cfg["stage1_days"],
                           clip=cfg["clip"], seed=cfg["seed"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    _, (train_split, _, _), mask = _load_data(cfg)
    stats = compute_norm_stats(train_split, mask)
    result = train(scfg, tcfg, train_split, lead, mask, stats)
    out = cfg["out"]
    name = model_name(lead)
    save_params(result.params, os.path.join(out, f"{name}.ogpw"))
    write_key_values(os.path.join(out, f"{name}_config.txt"), {k: cfg[k] for k in MODEL_KEYS})
    write_norm_stats(stats, os.path.join(out, "norm_stats.csv"))
    log_name = "train_log.csv" if lead == 1 else f"train_log_{name}.csv"
    write_train_log(result.log, os.path.join(out, log_name))


def load_swin(model_dir, lead):
    """Swin3dPropagator from ``fm{lead}.ogpw`` and its config next to it, or None if absent."""
    from .io.stats import read_norm_stats
    from .propagators.params import load_params
    from .propagators.swin3d import Swin3dPropagator

    name = model_name(lead)
    path = os.path.join(model_dir, f"{name}.ogpw")
    if not os.path.exists(path):
        return None
    saved = parse_config_file(os.path.join(model_dir, f"{name}_config.txt"))
    mc = resolve("train", saved, {})
    return Swin3dPropagator(load_params(path), _swin_config(mc),
                            read_norm_stats(os.path.join(model_dir, "norm_stats.csv")), lead)


def _default_inits(manifest, valid_end, horizon):
    return [d for d in manifest.days if d > valid_end and d - 1 in manifest and d + horizon in manifest]


def _propagators(cfg, manifest, train_split, mask):
    from .objective import build_climatology, read_climatology
    from .propagators.physics import Advective, ClimatologyNudge, Persistence
    from .rollout import plan_schedule, single_propagator_schedule

    kind, horizon = cfg["propagator"], cfg["horizon"]
    if kind == "swin3d":
        _require(cfg, "model_dir")
        fm1 = load_swin(cfg["model_dir"], 1)
        if fm1 is None:
            raise ConfigError(f"no fm1.ogpw in {cfg['model_dir']}")
        fm5 = load_swin(cfg["model_dir"], 5)
        if fm5 is not None and horizon > 5:
            return {"fm1": fm1, "fm5": fm5}, plan_schedule(horizon)
        return {"fm1": fm1}, single_propagator_schedule(horizon)
    if kind == "persistence":
        prop = Persistence()
    elif kind == "advective":
        prop = Advective(cfg["kappa"], cfg["gamma"])
    elif kind == "climatology_nudge":
        if not 0 <= cfg["alpha"] <= 1:
            raise ConfigError("--alpha must lie in [0, 1]")
        clim = read_climatology(cfg["climatology"]) if cfg["climatology"] else build_climatology(train_split, mask)
        prop = ClimatologyNudge(clim, cfg["alpha"])
    else:
        raise ConfigError(f"unknown propagator {kind!r}")
    return {"fm1": prop}, single_propagator_schedule(horizon)


def cmd_forecast(cfg):
    from .rollout import forecast_suite, write_trajectories

    if cfg["horizon"] < 1:
        raise ConfigError("--horizon must be >= 1")
    manifest, (train_split, _, _), mask = _load_data(cfg)
    props, sched = _propagators(cfg, manifest, train_split, mask)
    inits = list(cfg["init_days"]) or _default_inits(manifest, cfg["valid_end"], cfg["horizon"])
    if not inits:
        raise ConfigError("no initialization day has truth through the horizon; pass --init-days")
    write_trajectories(forecast_suite(manifest, inits, cfg["horizon"], props, sched), cfg["out"])


def cmd_evaluate(cfg):
    from .diagnostics import build_report, histogram_edges
    from .grid import cell_geometry, latitude_weights
    from .io.ogf import read_ogf
    from .io.report import write_report
    from .objective import build_climatology, read_climatology
    from .propagators.physics import Persistence
    from .rollout import forecast_suite, read_trajectories, single_propagator_schedule

    _require(cfg, "forecasts")
    if cfg["against"] not in ("none", "persistence"):
        raise ConfigError(f"--against must be 'none' or 'persistence', got {cfg['against']!r}")
    if cfg["hist_bins"] < 1 or not cfg["hist_max"] > 0:
        raise ConfigError("histogram needs >= 1 bin and a positive upper edge")
    manifest, (train_split, _, _), mask = _load_data(cfg)
    suite = read_trajectories(cfg["forecasts"], manifest)
    clim = read_climatology(cfg["climatology"]) if cfg["climatology"] else build_climatology(train_split, mask)
    geom = cell_geometry(mask.spec)
    w = latitude_weights(mask.spec)
    cache = {}

    def truth(day):
        if day not in manifest:
            return None
        if day not in cache:
            cache[day] = read_ogf(manifest.ocean_path(day))
        return cache[day]

    bins = histogram_edges(cfg["hist_bins"], cfg["hist_max"])
    report = build_report(suite, truth, mask, geom, w, clim, bins, per_depth=cfg["per_depth"])
    if cfg["against"] == "persistence" and suite:
        horizon = min(max(t.states) for _, t in suite)
        base = forecast_suite(manifest, [d for d, _ in suite], horizon, {"fm1": Persistence()},
                              single_propagator_schedule(horizon))
        ref = build_report(base, truth, mask, geom, w, clim, bins, per_depth=cfg["per_depth"])
        write_report(ref, os.path.join(cfg["out"], "persistence"))
        ref_pts = {(c.variable, str(c.depth)): c.points for c in ref.curve_family("rmse")}
        rows = []
        for c in report.curve_family("rmse"):
            other = ref_pts.get((c.variable, str(c.depth)), {})
            for lead, v in sorted(c.points.items()):
                depth = c.depth if isinstance(c.depth, str) else repr(float(c.depth))
                rows.append((lead, c.variable, depth, repr(v), repr(other.get(lead, float("nan")))))
        report.tables.append(("rmse_comparison.csv",
                              ["lead_days", "variable", "depth_m", "model", "persistence"], rows))
    write_report(report, cfg["out"])


COMMANDS = {"synth": cmd_synth, "stats": cmd_stats, "climatology": cmd_climatology, "train": cmd_train,
            "forecast": cmd_forecast, "evaluate": cmd_evaluate}


def build_parser():
    parser = argparse.ArgumentParser(prog="ocean3d", description="Upper-ocean increment forecasting toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} step")
        p.add_argument("--config", help="key = value settings file")
        for k in keys_for(name):
            default = "" if k.default is None else f" (default: {_fmt(k.default)})"
            p.add_argument("--" + k.name.replace("_", "-"), dest=k.name, default=None, help=k.help + default)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    command = args.command
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config") and v is not None}
    sub = parser._subparsers._group_actions[0].choices[command]
    try:
        file_values = parse_config_file(args.config) if args.config else {}
        cfg = resolve(command, file_values, flags)
        if not cfg.get("out"):
            sub.print_usage(sys.stderr)
            print(f"ocean3d {command}: error: --out is required", file=sys.stderr)
            return EXIT_CONFIG
        if cfg["threads"] < 1:
            raise ConfigError("--threads must be >= 1")
        echo_config(command, cfg, cfg["out"])
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=cfg["threads"]):
            COMMANDS[command](cfg)
    except ConfigError as exc:
        print(f"ocean3d {command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (Ocean3dError, OSError) as exc:
        print(f"ocean3d {command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
