"""Multi-day forecasts by iterating X_{t+lead} = X_t + M(X_{t-1}, X_t, F_{t-1}, F_t).

Days are relative to the initialization day 0. The default schedule steps
FM1 from bases 0..4 to fill days 1..5, then FM5 from bases 1..horizon-5 on
forecast pairs to reach days 6..horizon.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

from .errors import BadHorizon, InsufficientData, MissingForcing, MissingInputDay, Ocean3dError
from .io.ogf import read_ogf, write_ogf
from .objective import apply_increment


@dataclass(frozen=True)
class RolloutStep:
    propagator: str
    base: int
    lead: int

    @property
    def produces(self):
        return self.base + self.lead

    @property
    def source(self):
        """Where the input pair comes from: truth only for the initial pair."""
        return "truth" if self.base <= 0 else "forecast"


@dataclass(frozen=True)
class RolloutSchedule:
    steps: tuple
    horizon: int

    def __post_init__(self):
        available = {-1, 0}
        produced = []
        for s in self.steps:
            if s.lead < 1:
                raise BadHorizon(f"step {s} has non-positive lead")
            for d in (s.base - 1, s.base):
                if d not in available:
                    raise MissingInputDay(d, f"step {s} needs day {d} before it is produced")
            available.add(s.produces)
            produced.append(s.produces)
        if sorted(produced) != list(range(1, self.horizon + 1)):
            raise BadHorizon(f"schedule produces days {sorted(produced)}, not 1..{self.horizon}")

    def produced_days(self):
        return [s.produces for s in self.steps]


def plan_schedule(horizon, fm1_lead=1, fm5_lead=5):
    if not isinstance(horizon, int) or horizon < 1:
        raise BadHorizon(f"horizon {horizon!r} must be a positive integer")
    if fm1_lead != 1:
        raise BadHorizon("the daily propagator must have lead 1")
    steps = [RolloutStep("fm1", t, fm1_lead) for t in range(min(horizon, fm5_lead))]
    steps += [RolloutStep("fm5", t, fm5_lead) for t in range(1, horizon - fm5_lead + 1)]
    return RolloutSchedule(tuple(steps), horizon)


def single_propagator_schedule(horizon, name="fm1"):
    """Daily steps only, every day produced by ``name``."""
    if not isinstance(horizon, int) or horizon < 1:
        raise BadHorizon(f"horizon {horizon!r} must be a positive integer")
    return RolloutSchedule(tuple(RolloutStep(name, t, 1) for t in range(horizon)), horizon)


@dataclass
class Trajectory:
    init_day: int  # absolute day of the initialization
    states: dict  # relative day -> OceanState
    provenance: dict = field(default_factory=dict)  # relative day -> RolloutStep or "truth"

    @property
    def horizon(self):
        return max(self.states)

    def at(self, lead):
        return self.states[lead]


class StepFailed(Ocean3dError):
    def __init__(self, step, cause):
        self.step = step
        self.cause = cause
        super().__init__(f"{step.propagator} step from base {step.base} (lead {step.lead}) failed: {cause}")


def rollout(init_pair, forcing, props, sched):
    """Run ``sched`` from the truth pair (day -1, day 0).

    ``forcing`` maps absolute day -> ForcingState (perfect forcing); ``props``
    maps propagator id -> callable.
    """
    x_prev, x0 = init_pair
    init = x0.time
    if x_prev.time != init - 1:
        raise MissingInputDay(init - 1, "initial pair must be two consecutive days")
    states = {-1: x_prev, 0: x0}
    prov = {-1: "truth", 0: "truth"}
    for step in sched.steps:
        for d in (step.base - 1, step.base):
            if d not in states:
                raise MissingInputDay(init + d)
            if init + d not in forcing:
                raise MissingForcing(init + d)
        if step.propagator not in props:
            raise KeyError(f"no propagator named {step.propagator!r}")
        prop = props[step.propagator]
        if getattr(prop, "lead", step.lead) != step.lead:
            raise BadHorizon(f"{step.propagator} has lead {prop.lead}, schedule wants {step.lead}")
        x_b = states[step.base]
        try:
            d = prop(states[step.base - 1], x_b, forcing[init + step.base - 1], forcing[init + step.base])
        except Ocean3dError as exc:
            raise StepFailed(step, exc) from exc
        states[step.produces] = apply_increment(x_b, d)
        prov[step.produces] = step
    del states[-1], prov[-1]
    return Trajectory(init, states, prov)


class ForcingCache(dict):
    """Lazy absolute day -> ForcingState lookup backed by a manifest."""

    def __init__(self, manifest):
        super().__init__()
        self.manifest = manifest

    def __contains__(self, day):
        return dict.__contains__(self, day) or day in self.manifest

    def __missing__(self, day):
        if day not in self.manifest:
            raise MissingForcing(day)
        value = read_ogf(self.manifest.forcing_path(day))
        self[day] = value
        return value


def load_truth(manifest, init_day, horizon):
    return {k: read_ogf(manifest.ocean_path(init_day + k)) for k in range(0, horizon + 1)
            if init_day + k in manifest}


def forecast_suite(manifest, init_days, horizon, props, sched=None, forcing=None):
    """One independent trajectory per initialization day.

    ``manifest`` must hold truth for (init-1, init) and forcing through the
    last base day any step uses. Returns [(init_day, Trajectory)].
    """
    sched = sched or plan_schedule(horizon)
    forcing = forcing if forcing is not None else ForcingCache(manifest)
    last_base = max(s.base for s in sched.steps)
    out = []
    for init in init_days:
        if init - 1 not in manifest or init not in manifest:
            raise InsufficientData(f"no truth pair for initialization day {init}")
        for d in range(init - 1, init + last_base + 1):
            if d not in forcing:
                raise MissingForcing(d)
        pair = (read_ogf(manifest.ocean_path(init - 1)), read_ogf(manifest.ocean_path(init)))
        out.append((init, rollout(pair, forcing, props, sched)))
    return out


def trajectory_filename(init_day, lead):
    return f"fc_init{init_day}_lead{lead}.ogf"


def write_trajectories(suite, out_dir):
    """OGF per (init, lead >= 1) plus ``forecast_manifest.csv`` recording provenance."""
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for init, traj in suite:
        for lead in sorted(traj.states):
            if lead < 1:
                continue
            name = trajectory_filename(init, lead)
            write_ogf(traj.states[lead], os.path.join(out_dir, name))
            step = traj.provenance[lead]
            rows.append((init, lead, name, step.propagator, step.base, step.lead, step.source))
    with open(os.path.join(out_dir, "forecast_manifest.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["init_day", "lead_days", "file", "propagator", "base_day", "step_lead", "input_source"])
        w.writerows(rows)
    return rows


def read_trajectories(out_dir, manifest=None):
    """Inverse of :func:`write_trajectories`; day 0 comes from ``manifest`` when given."""
    with open(os.path.join(out_dir, "forecast_manifest.csv"), newline="") as fh:
        rows = list(csv.DictReader(fh))
    by_init = {}
    for r in rows:
        init, lead = int(r["init_day"]), int(r["lead_days"])
        traj = by_init.setdefault(init, Trajectory(init, {}, {}))
        traj.states[lead] = read_ogf(os.path.join(out_dir, r["file"]))
        traj.provenance[lead] = RolloutStep(r["propagator"], int(r["base_day"]), int(r["step_lead"]))
        if manifest is not None and 0 not in traj.states and init in manifest:
            traj.states[0] = read_ogf(manifest.ocean_path(init))
            traj.provenance[0] = "truth"
    return sorted(by_init.items())

