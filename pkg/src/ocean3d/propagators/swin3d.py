"""Toy U-shaped 3D shifted-window transformer that predicts state increments.

Pipeline for one sample:

1. z-score the ocean pair and forcing pair with training statistics; land
   NaNs become 0 (attention is not masked at coasts).
2. Concatenate the two ocean time levels channel-wise and embed each
   (p_d, p_h, p_w) patch linearly into C channels.
3. Embed the forcing pair per (p_h, p_w) surface patch, broadcast it down
   the depth tokens and add it.
4. Encoder stages of pre-norm windowed self-attention blocks (even blocks
   plain windows, odd blocks cyclically shifted by half a window with
   cross-seam masking), each followed by 2x2 horizontal patch merging;
   a bottleneck stage; decoder stages that expand 2x2, add the encoder
   skip and run blocks again.
5. A linear head maps tokens back to (V, p_d, p_h, p_w) voxels, which are
   cropped to the grid, multiplied by the per-variable, per-depth std and
   set to NaN on land.

The MLP nonlinearity is the tanh GELU,
``0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))``.

A global, fully periodic longitude axis is treated as cyclic: windows that
wrap across the dateline are physically contiguous, so the shifted-window
mask only separates wrapped tokens along depth and latitude.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigIncompatible, NonFiniteActivation, NonFiniteGradient, SpecMismatch
from ..grid import FORCING_VARS, OCEAN_VARS
from ..objective import StateIncrement
from . import autodiff as ad
from .params import ParamSet

N_OCEAN = len(OCEAN_VARS)
N_FORCING = len(FORCING_VARS)


@dataclass(frozen=True)
class Swin3dConfig:
    patch: tuple = (2, 4, 4)
    embed_dim: int = 32
    window: tuple = (2, 4, 4)
    levels: int = 2
    enc_depths: tuple = (2, 2)
    mid_depth: int = 2
    dec_depths: tuple = (2, 2)
    heads: int = 4
    mlp_ratio: float = 4.0
    pos_embed: bool = True
    periodic_lon: bool | None = None  # None: follow the grid
    seed: int = 0
    init_std: float = 0.02

    def __post_init__(self):
        for name in ("patch", "window", "enc_depths", "dec_depths"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        if len(self.patch) != 3 or len(self.window) != 3 or min(self.patch + self.window) < 1:
            raise ConfigIncompatible("patch and window need three positive sizes")
        if self.embed_dim < 1 or self.heads < 1 or self.embed_dim % self.heads:
            raise ConfigIncompatible(f"embed_dim {self.embed_dim} not divisible by {self.heads} heads")
        if len(self.enc_depths) != self.levels or len(self.dec_depths) != self.levels:
            raise ConfigIncompatible("one encoder and one decoder depth per level is required")
        if self.levels < 0 or self.mid_depth < 0 or min(self.enc_depths + self.dec_depths, default=0) < 0:
            raise ConfigIncompatible("stage depths must be non-negative")
        if self.mlp_ratio <= 0:
            raise ConfigIncompatible("mlp_ratio must be positive")

    def dim(self, level):
        return self.embed_dim * 2 ** level

    def hidden(self, level):
        return max(1, int(round(self.dim(level) * self.mlp_ratio)))


@dataclass(frozen=True)
class LevelGeometry:
    grid: tuple  # (Dt, Ht, Wt) tokens
    window: tuple
    shift: tuple
    allowed: np.ndarray  # (nW, N, N) attention mask for shifted blocks


@dataclass(frozen=True)
class Geometry:
    shape: tuple  # (D, H, W) of the ocean grid
    padded: tuple  # (Dp, Hp, Wp)
    periodic: bool
    levels: tuple  # LevelGeometry per resolution level 0..L


def _smallest_valid(n, step, ok):
    size = max(step, -(-n // step) * step)
    for _ in range(10_000):
        if ok(size):
            return size
        size += step
    raise ConfigIncompatible(f"no padded size >= {n} satisfies the window constraints")


def region_ids(grid, window, shift, periodic):
    """Per-token region label on the rolled grid; tokens attend only within a label."""
    ids = np.zeros(grid, dtype=np.int64)
    for axis, (g, w, s) in enumerate(zip(grid, window, shift)):
        if s == 0 or periodic[axis]:
            continue
        lab = np.zeros(g, dtype=np.int64)
        lab[g - w:g - s] = 1
        lab[g - s:] = 2
        shape = [1, 1, 1]
        shape[axis] = g
        ids = ids * 3 + lab.reshape(shape)
    return ids


def partition_np(a, window):
    """(Dt, Ht, Wt, ...) -> (nW, N, ...) windows in row-major window order."""
    (D, H, W), (a_, b_, c_) = a.shape[:3], window
    rest = a.shape[3:]
    x = a.reshape(D // a_, a_, H // b_, b_, W // c_, c_, *rest)
    x = x.transpose(0, 2, 4, 1, 3, 5, *range(6, 6 + len(rest)))
    return x.reshape((D // a_) * (H // b_) * (W // c_), a_ * b_ * c_, *rest)


def shifted_window_mask(grid, window, shift, periodic=(False, False, False)):
    ids = partition_np(region_ids(grid, window, shift, periodic), window)
    return ids[:, :, None] == ids[:, None, :]


@functools.lru_cache(maxsize=32)
def build_geometry(cfg, spec):
    D, H, W = spec.n_depth, spec.n_lat, spec.n_lon
    periodic = spec.is_periodic_lon if cfg.periodic_lon is None else bool(cfg.periodic_lon)
    if periodic and not spec.is_periodic_lon:
        raise ConfigIncompatible("periodic longitude requested on a grid that does not span 360 degrees")
    pd, ph, pw = cfg.patch
    wd, wh, ww = cfg.window
    L = cfg.levels

    def depth_ok(n):
        t = n // pd
        return t % min(wd, t) == 0

    def horiz_ok(n, p, w):
        t = n // p
        if t % 2 ** L:
            return False
        return all((t // 2 ** r) % min(w, t // 2 ** r) == 0 for r in range(L + 1))

    Dp = _smallest_valid(D, pd, depth_ok)
    Hp = _smallest_valid(H, ph * 2 ** L, lambda n: horiz_ok(n, ph, wh))
    Wp = _smallest_valid(W, pw * 2 ** L, lambda n: horiz_ok(n, pw, ww))
    if periodic and Wp != W:
        raise ConfigIncompatible(
            f"periodic longitude of {W} cells needs no padding, but the patch/window/level layout requires {Wp}")
    levels = []
    for r in range(L + 1):
        grid = (Dp // pd, Hp // ph // 2 ** r, Wp // pw // 2 ** r)
        win = tuple(min(w, g) for w, g in zip(cfg.window, grid))
        shift = tuple(w // 2 if w < g else 0 for w, g in zip(win, grid))
        allowed = shifted_window_mask(grid, win, shift, (False, False, periodic))
        levels.append(LevelGeometry(grid, win, shift, allowed))
    return Geometry((D, H, W), (Dp, Hp, Wp), periodic, tuple(levels))


def translation_stride(cfg, spec):
    """Smallest longitude shift (cells) under which the network commutes with cyclic shifts."""
    geo = build_geometry(cfg, spec)
    stride = 1
    for r, lev in enumerate(geo.levels):
        stride = math.lcm(stride, cfg.patch[2] * 2 ** r * lev.window[2])
    return stride


def _block_shapes(prefix, dim, hidden):
    return [
        (f"{prefix}.ln1.g", (dim,)), (f"{prefix}.ln1.b", (dim,)),
        (f"{prefix}.qkv.w", (dim, 3 * dim)), (f"{prefix}.qkv.b", (3 * dim,)),
        (f"{prefix}.proj.w", (dim, dim)), (f"{prefix}.proj.b", (dim,)),
        (f"{prefix}.ln2.g", (dim,)), (f"{prefix}.ln2.b", (dim,)),
        (f"{prefix}.fc1.w", (dim, hidden)), (f"{prefix}.fc1.b", (hidden,)),
        (f"{prefix}.fc2.w", (hidden, dim)), (f"{prefix}.fc2.b", (dim,)),
    ]


def param_shapes(cfg, spec):
    geo = build_geometry(cfg, spec)
    pd, ph, pw = cfg.patch
    C = cfg.embed_dim
    shapes = [
        ("embed.ocean.w", (2 * N_OCEAN * pd * ph * pw, C)), ("embed.ocean.b", (C,)),
        ("embed.forcing.w", (2 * N_FORCING * ph * pw, C)), ("embed.forcing.b", (C,)),
    ]
    if cfg.pos_embed:
        shapes.append(("pos", geo.levels[0].grid + (C,)))
    for r in range(cfg.levels):
        for b in range(cfg.enc_depths[r]):
            shapes += _block_shapes(f"enc{r}.block{b}", cfg.dim(r), cfg.hidden(r))
        shapes += [(f"enc{r}.merge.ln.g", (4 * cfg.dim(r),)), (f"enc{r}.merge.ln.b", (4 * cfg.dim(r),)),
                   (f"enc{r}.merge.w", (4 * cfg.dim(r), cfg.dim(r + 1)))]
    for b in range(cfg.mid_depth):
        shapes += _block_shapes(f"mid.block{b}", cfg.dim(cfg.levels), cfg.hidden(cfg.levels))
    for r in reversed(range(cfg.levels)):
        shapes.append((f"dec{r}.expand.w", (cfg.dim(r + 1), 4 * cfg.dim(r))))
        for b in range(cfg.dec_depths[r]):
            shapes += _block_shapes(f"dec{r}.block{b}", cfg.dim(r), cfg.hidden(r))
    shapes += [("head.ln.g", (C,)), ("head.ln.b", (C,)),
               ("head.w", (C, N_OCEAN * pd * ph * pw)), ("head.b", (N_OCEAN * pd * ph * pw,))]
    return shapes


def init_params(cfg, spec, seed=None):
    """Normal(0, init_std) weights and embeddings, unit layer-norm gains, zero biases."""
    ps = ParamSet.from_shapes(param_shapes(cfg, spec))
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    for e in ps.layout:
        view = ps.view(e.name)
        leaf = e.name.rsplit(".", 1)[-1]
        if leaf == "g":
            view[...] = 1.0
        elif leaf == "b":
            view[...] = 0.0
        else:
            view[...] = rng.normal(0.0, cfg.init_std, e.shape)
    return ps


# ---------------------------------------------------------------------------
# input conditioning (constants, no gradient)


def normalize_ocean(x, stats):
    z = (np.asarray(x) - stats.mean[:, :, None, None]) / stats.std[:, :, None, None]
    return np.where(np.isfinite(z), z, 0.0)


def normalize_forcing(f, stats):
    return (np.asarray(f) - stats.forcing_mean[:, None, None]) / stats.forcing_std[:, None, None]


def ocean_patches(geo, cfg, z_prev, z_t):
    """(B, V, D, H, W) pair -> (B, Dt, Ht, Wt, 2V pd ph pw); depth edge-padded, H/W zero-padded."""
    (D, H, W), (Dp, Hp, Wp) = geo.shape, geo.padded
    x = np.concatenate([z_prev, z_t], axis=1)
    if Dp > D:
        x = np.concatenate([x, np.repeat(x[:, :, -1:], Dp - D, axis=2)], axis=2)
    x = np.pad(x, [(0, 0), (0, 0), (0, 0), (0, Hp - H), (0, Wp - W)])
    B, Cin = x.shape[:2]
    pd, ph, pw = cfg.patch
    x = x.reshape(B, Cin, Dp // pd, pd, Hp // ph, ph, Wp // pw, pw)
    x = x.transpose(0, 2, 4, 6, 1, 3, 5, 7)
    return np.ascontiguousarray(x.reshape(B, Dp // pd, Hp // ph, Wp // pw, Cin * pd * ph * pw))


def forcing_patches(geo, cfg, g_prev, g_t):
    (_, H, W), (_, Hp, Wp) = geo.shape, geo.padded
    x = np.concatenate([g_prev, g_t], axis=1)
    x = np.pad(x, [(0, 0), (0, 0), (0, Hp - H), (0, Wp - W)])
    B, Cin = x.shape[:2]
    _, ph, pw = cfg.patch
    x = x.reshape(B, Cin, Hp // ph, ph, Wp // pw, pw).transpose(0, 2, 4, 1, 3, 5)
    return np.ascontiguousarray(x.reshape(B, 1, Hp // ph, Wp // pw, Cin * ph * pw))


# ---------------------------------------------------------------------------
# differentiable network


def _partition(x, window):
    B, D, H, W, C = x.shape
    a, b, c = window
    x = ad.reshape(x, (B, D // a, a, H // b, b, W // c, c, C))
    x = ad.transpose(x, (0, 1, 3, 5, 2, 4, 6, 7))
    return ad.reshape(x, (B * (D // a) * (H // b) * (W // c), a * b * c, C))


def _unpartition(x, window, grid, batch):
    D, H, W = grid
    a, b, c = window
    C = x.shape[-1]
    x = ad.reshape(x, (batch, D // a, H // b, W // c, a, b, c, C))
    x = ad.transpose(x, (0, 1, 4, 2, 5, 3, 6, 7))
    return ad.reshape(x, (batch, D, H, W, C))


def _attention(x, P, pre, heads, allowed, batch, probe):
    BW, N, C = x.shape
    hd = C // heads
    qkv = ad.linear(x, P[f"{pre}.qkv.w"], P[f"{pre}.qkv.b"])
    qkv = ad.transpose(ad.reshape(qkv, (BW, N, 3, heads, hd)), (2, 0, 3, 1, 4))
    q, k, v = (ad.slice_(qkv, i) for i in range(3))
    logits = ad.matmul(ad.mul(q, 1.0 / math.sqrt(hd)), ad.transpose(k, (0, 1, 3, 2)))
    if allowed is not None:
        nW = allowed.shape[0]
        logits = ad.reshape(logits, (batch, nW, heads, N, N))
        attn = ad.softmax(logits, allowed[None, :, None])
        attn = ad.reshape(attn, (BW, heads, N, N))
    else:
        attn = ad.softmax(logits)
    if probe is not None:
        probe[pre] = (attn.data.copy(), allowed)
    out = ad.matmul(attn, v)
    out = ad.reshape(ad.transpose(out, (0, 2, 1, 3)), (BW, N, C))
    return ad.linear(out, P[f"{pre}.proj.w"], P[f"{pre}.proj.b"])


def _block(x, P, pre, lev, shifted, heads, probe):
    batch = x.shape[0]
    h = ad.layer_norm(x, P[f"{pre}.ln1.g"], P[f"{pre}.ln1.b"])
    shift = lev.shift if shifted else (0, 0, 0)
    rolled = any(shift)
    if rolled:
        h = ad.roll(h, tuple(-s for s in shift), (1, 2, 3))
    h = _partition(h, lev.window)
    h = _attention(h, P, pre, heads, lev.allowed if rolled else None, batch, probe)
    h = _unpartition(h, lev.window, lev.grid, batch)
    if rolled:
        h = ad.roll(h, shift, (1, 2, 3))
    x = ad.add(x, h)
    h = ad.layer_norm(x, P[f"{pre}.ln2.g"], P[f"{pre}.ln2.b"])
    h = ad.gelu(ad.linear(h, P[f"{pre}.fc1.w"], P[f"{pre}.fc1.b"]))
    return ad.add(x, ad.linear(h, P[f"{pre}.fc2.w"], P[f"{pre}.fc2.b"]))


def _merge(x, P, pre):
    B, D, H, W, C = x.shape
    x = ad.reshape(x, (B, D, H // 2, 2, W // 2, 2, C))
    x = ad.reshape(ad.transpose(x, (0, 1, 2, 4, 3, 5, 6)), (B, D, H // 2, W // 2, 4 * C))
    x = ad.layer_norm(x, P[f"{pre}.ln.g"], P[f"{pre}.ln.b"])
    return ad.linear(x, P[f"{pre}.w"])


def _expand(x, P, pre):
    B, D, H, W, _ = x.shape
    x = ad.linear(x, P[f"{pre}.w"])
    C = x.shape[-1] // 4
    x = ad.reshape(x, (B, D, H, W, 2, 2, C))
    return ad.reshape(ad.transpose(x, (0, 1, 2, 4, 3, 5, 6)), (B, D, 2 * H, 2 * W, C))


def _stage(x, P, prefix, depth, lev, heads, probe):
    for b in range(depth):
        x = _block(x, P, f"{prefix}.block{b}", lev, b % 2 == 1, heads, probe)
    return x


def network(P, cfg, geo, ocean_in, forcing_in, std, probe=None):
    """Differentiable map from patch inputs to physical increments (B, V, D, H, W).

    ``P`` maps parameter names to Tensors; ``std`` is the (V, D) scale that
    un-normalises the head output.
    """
    x = ad.linear(ad.constant(ocean_in), P["embed.ocean.w"], P["embed.ocean.b"])
    x = ad.add(x, ad.linear(ad.constant(forcing_in), P["embed.forcing.w"], P["embed.forcing.b"]))
    if cfg.pos_embed:
        x = ad.add(x, P["pos"])
    skips = []
    for r in range(cfg.levels):
        x = _stage(x, P, f"enc{r}", cfg.enc_depths[r], geo.levels[r], cfg.heads, probe)
        skips.append(x)
        x = _merge(x, P, f"enc{r}.merge")
    x = _stage(x, P, "mid", cfg.mid_depth, geo.levels[cfg.levels], cfg.heads, probe)
    for r in reversed(range(cfg.levels)):
        x = ad.add(_expand(x, P, f"dec{r}.expand"), skips[r])
        x = _stage(x, P, f"dec{r}", cfg.dec_depths[r], geo.levels[r], cfg.heads, probe)
    x = ad.layer_norm(x, P["head.ln.g"], P["head.ln.b"])
    x = ad.linear(x, P["head.w"], P["head.b"])
    B, Dt, Ht, Wt, _ = x.shape
    pd, ph, pw = cfg.patch
    x = ad.reshape(x, (B, Dt, Ht, Wt, N_OCEAN, pd, ph, pw))
    x = ad.transpose(x, (0, 4, 1, 5, 2, 6, 3, 7))
    (D, H, W), (Dp, Hp, Wp) = geo.shape, geo.padded
    x = ad.reshape(x, (B, N_OCEAN, Dp, Hp, Wp))
    x = ad.slice_(x, (slice(None), slice(None), slice(0, D), slice(0, H), slice(0, W)))
    return ad.mul(x, std[None, :, :, None, None])


def tensors(ps, values=None, requires_grad=True):
    make = ad.param if requires_grad else ad.constant
    return {e.name: make(ps.view(e.name, values)) for e in ps.layout}


class Swin3dModel:
    """Binds a config to a grid and normalisation statistics."""

    def __init__(self, cfg, spec, stats):
        self.cfg = cfg
        self.spec = spec
        self.stats = stats
        self.geo = build_geometry(cfg, spec)
        if stats.mean.shape != (N_OCEAN, spec.n_depth):
            raise SpecMismatch(f"statistics shape {stats.mean.shape} does not match the grid")

    def inputs(self, x_prev, x_t, f_prev, f_t):
        """Batch arrays (B, V, D, H, W) / (B, 8, H, W) -> patch inputs."""
        s = self.stats
        oc = ocean_patches(self.geo, self.cfg, normalize_ocean(x_prev, s), normalize_ocean(x_t, s))
        fo = forcing_patches(self.geo, self.cfg, normalize_forcing(f_prev, s), normalize_forcing(f_t, s))
        return oc, fo

    def forward(self, ps, x_prev, x_t, f_prev, f_t, values=None, probe=None):
        oc, fo = self.inputs(x_prev, x_t, f_prev, f_t)
        out = network(tensors(ps, values, requires_grad=False), self.cfg, self.geo, oc, fo,
                      self.stats.std, probe).data
        if not np.all(np.isfinite(out)):
            raise NonFiniteActivation("non-finite values in the network output")
        return out

    def _loss_terms(self, batch, weights):
        target = batch[4]
        denom = N_OCEAN * weights.sum() * target.shape[0]
        cw = np.broadcast_to(weights / denom, target.shape)
        return np.where(cw > 0, target, 0.0), cw

    def loss(self, ps, batch, weights, values=None):
        """Forward-only batch loss (same value as :meth:`loss_and_grad`)."""
        oc, fo = self.inputs(*batch[:4])
        pred = network(tensors(ps, values, requires_grad=False), self.cfg, self.geo, oc, fo, self.stats.std)
        tgt, cw = self._loss_terms(batch, weights)
        return float(ad.weighted_sq_error(pred, tgt, cw).data)

    def loss_and_grad(self, ps, batch, weights, values=None):
        """Mean weighted increment loss over ``batch`` and its exact gradient.

        ``batch`` is (x_prev, x_t, f_prev, f_t, target) arrays with a leading
        batch axis; ``weights`` is the (D, H, W) cell weight w_i M_kij.
        Land entries of ``target`` are ignored.
        """
        oc, fo = self.inputs(*batch[:4])
        P = tensors(ps, values)
        pred = network(P, self.cfg, self.geo, oc, fo, self.stats.std)
        tgt, cw = self._loss_terms(batch, weights)
        loss = ad.weighted_sq_error(pred, tgt, cw)
        loss.backward()
        grad = np.zeros(ps.count)
        for e in ps.layout:
            g = P[e.name].grad
            if g is not None:
                grad[e.offset:e.offset + e.size] = g.reshape(-1)
        return float(loss.data), grad


def _stack(states):
    return np.stack([np.asarray(getattr(s, "data", s), dtype=np.float64) for s in states])


def swin3d_forward(params, cfg, x_prev, x_t, f_prev, f_t, stats, mask=None, lead=1):
    """Increment predicted for one sample; NaN on land (mask, or NaNs of ``x_t``)."""
    model = Swin3dModel(cfg, x_t.spec, stats)
    out = model.forward(params, _stack([x_prev]), _stack([x_t]), _stack([f_prev]), _stack([f_t]))[0]
    ocean = mask.data if mask is not None else np.isfinite(x_t.data[0])
    return StateIncrement(x_t.spec, x_t.time, lead, np.where(ocean[None], out, np.nan))


def cell_weights(mask, w):
    """(D, H, W) loss weight w_i M_kij."""
    return np.where(mask.data, np.asarray(w, dtype=np.float64)[None, :, None], 0.0)


def loss_and_grad(params, cfg, batch, mask, w, stats):
    """Batch-mean weighted increment loss and its gradient for (x_prev, x_t, f_prev, f_t, truth) tuples."""
    if not batch:
        raise ValueError("empty batch")
    leads = {item[4].lead for item in batch}
    if len(leads) != 1:
        raise SpecMismatch(f"batch mixes leads {sorted(leads)}")
    model = Swin3dModel(cfg, batch[0][1].spec, stats)
    arrays = tuple(_stack([item[i] for item in batch]) for i in range(5))
    loss, grad = model.loss_and_grad(params, arrays, cell_weights(mask, w))
    if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
        raise NonFiniteGradient("loss or gradient is not finite")
    return loss, grad


@dataclass(frozen=True, eq=False)
class Swin3dPropagator:
    params: ParamSet
    cfg: Swin3dConfig
    stats: object
    lead: int = 1
    kind = "swin3d"

    def __call__(self, x_prev, x_t, f_prev, f_t):
        return swin3d_forward(self.params, self.cfg, x_prev, x_t, f_prev, f_t, self.stats, lead=self.lead)
