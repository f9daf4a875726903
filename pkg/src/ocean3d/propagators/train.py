"""Two-stage Adam training of the Swin3d propagator on increment targets."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ..errors import BadBoundary, Divergence, InsufficientData, IoFailure
from ..grid import latitude_weights
from ..io.ogf import read_ogf
from .swin3d import Swin3dModel, cell_weights, init_params


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 4
    epochs_stage1: int = 2
    epochs_stage2: int = 4
    stage1_days: int | None = None  # leading training days used in stage 1; None: half the split
    clip: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not (self.lr > 0 and self.eps > 0 and 0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("learning rate, eps and moment decays must be positive / in [0, 1)")
        if self.batch_size < 1 or self.epochs_stage1 < 0 or self.epochs_stage2 < 0:
            raise ValueError("batch size must be >= 1 and epoch counts >= 0")
        if self.clip <= 0:
            raise ValueError("gradient clip threshold must be positive")


@dataclass
class TrainResult:
    params: object
    log: list  # (epoch, stage, mean loss)


class Adam:
    def __init__(self, n, cfg):
        self.cfg = cfg
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, values, grad):
        c = self.cfg
        norm = float(np.sqrt(grad @ grad))
        if norm > c.clip:
            grad = grad * (c.clip / norm)
        self.t += 1
        self.m = c.beta1 * self.m + (1 - c.beta1) * grad
        self.v = c.beta2 * self.v + (1 - c.beta2) * grad * grad
        mhat = self.m / (1 - c.beta1 ** self.t)
        vhat = self.v / (1 - c.beta2 ** self.t)
        return values - c.lr * mhat / (np.sqrt(vhat) + c.eps)


class SampleStore:
    """Training days held in memory; a sample is indexed by its base day t."""

    def __init__(self, manifest, mask):
        self.mask = mask
        self.ocean = {}
        self.forcing = {}
        for d in manifest.days:
            self.ocean[d] = read_ogf(manifest.ocean_path(d)).data
            self.forcing[d] = read_ogf(manifest.forcing_path(d)).data
        self.spec = read_ogf(manifest.ocean_path(manifest.first_day)).spec if len(manifest) else None

    def bases(self, lead, first, last):
        """Base days t with t-1 >= first and t+lead <= last."""
        return [t for t in range(first + 1, last - lead + 1) if t - 1 in self.ocean and t + lead in self.ocean]

    def batch(self, bases, lead):
        o, f = self.ocean, self.forcing
        x_prev = np.stack([o[t - 1] for t in bases])
        x_t = np.stack([o[t] for t in bases])
        target = np.stack([o[t + lead] - o[t] for t in bases])
        return (x_prev, x_t, np.stack([f[t - 1] for t in bases]), np.stack([f[t] for t in bases]), target)


def training_stages(tcfg, manifest):
    first, last = manifest.first_day, manifest.last_day
    n1 = tcfg.stage1_days if tcfg.stage1_days is not None else max(1, len(manifest) // 2)
    if not 1 <= n1 <= len(manifest):
        raise BadBoundary(f"stage-1 window of {n1} days does not fit a {len(manifest)}-day training split")
    return [(1, tcfg.epochs_stage1, first, first + n1 - 1), (2, tcfg.epochs_stage2, first, last)]


def train(cfg, tcfg, data, lead, mask, stats, params=None, store=None, on_epoch=None):
    """Train on ``data`` (the training split). Returns a TrainResult.

    Stage 1 draws samples whose days all lie in the leading ``stage1_days``
    of the split; stage 2 uses the full split. Each epoch visits every sample
    once in an order drawn from ``(seed, epoch)``.
    """
    if lead < 1:
        raise ValueError(f"lead {lead} must be >= 1")
    store = store or SampleStore(data, mask)
    model = Swin3dModel(cfg, store.spec, stats)
    weights = cell_weights(mask, latitude_weights(store.spec))
    ps = params.copy() if params is not None else init_params(cfg, store.spec, seed=cfg.seed)
    values = ps.values.copy()
    opt = Adam(ps.count, tcfg)
    log = []
    epoch = 0
    for stage, n_epochs, first, last in training_stages(tcfg, data):
        bases = store.bases(lead, first, last)
        if n_epochs and not bases:
            raise InsufficientData(f"stage {stage} window {first}..{last} holds no (t-1, t, t+{lead}) triple")
        for _ in range(n_epochs):
            epoch += 1
            rng = np.random.default_rng([tcfg.seed, epoch])
            order = [bases[i] for i in rng.permutation(len(bases))]
            losses = []
            for s in range(0, len(order), tcfg.batch_size):
                chunk = order[s:s + tcfg.batch_size]
                loss, grad = model.loss_and_grad(ps, store.batch(chunk, lead), weights, values)
                if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
                    raise Divergence(epoch, stage)
                losses.append(loss * len(chunk))
                values = opt.step(values, grad)
            mean = float(np.sum(losses) / len(order))
            log.append((epoch, stage, mean))
            if on_epoch:
                on_epoch(epoch, stage, mean)
    return TrainResult(ps.copy(values), log)


def write_train_log(log, path):
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "stage", "loss"])
            for epoch, stage, loss in log:
                w.writerow([epoch, stage, repr(float(loss))])
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
