"""Loop-based re-implementation of the windowed transformer forward pass.

Written token by token from the model description, without reusing the
reshape/partition machinery of the package, so it serves as an independent
oracle for the vectorised network.
"""
import itertools
import math

import numpy as np

EPS = 1e-5


def ln(x, g, b):
    mu = x.mean()
    var = ((x - mu) ** 2).mean()
    return (x - mu) / math.sqrt(var + EPS) * g + b


def gelu(x):
    return 0.5 * x * (1 + np.tanh(math.sqrt(2 / math.pi) * (x + 0.044715 * x ** 3)))


def level_layout(window, grid):
    win = tuple(min(w, g) for w, g in zip(window, grid))
    shift = tuple(w // 2 if w < g else 0 for w, g in zip(win, grid))
    return win, shift


def may_attend(p, q, grid, win, shift, shifted, periodic_lon):
    """Whether token p sees token q in a (possibly shifted) block."""
    for axis in range(3):
        g, w = grid[axis], win[axis]
        s = shift[axis] if shifted else 0
        a, b = (p[axis] - s) % g, (q[axis] - s) % g
        if a // w != b // w:
            return False
        if s and not (axis == 2 and periodic_lon):
            if (p[axis] < s) != (q[axis] < s):
                return False
    return True


def block(x, P, pre, window, shifted, heads, periodic_lon):
    grid = x.shape[:3]
    win, shift = level_layout(window, grid)
    C = x.shape[-1]
    hd = C // heads
    tokens = list(itertools.product(*(range(n) for n in grid)))
    h = {t: ln(x[t], P[f"{pre}.ln1.g"], P[f"{pre}.ln1.b"]) for t in tokens}
    qkv = {t: h[t] @ P[f"{pre}.qkv.w"] + P[f"{pre}.qkv.b"] for t in tokens}
    out = np.array(x)
    for p in tokens:
        seen = [q for q in tokens if may_attend(p, q, grid, win, shift, shifted and any(shift), periodic_lon)]
        att = np.zeros(C)
        for m in range(heads):
            qv = qkv[p][m * hd:(m + 1) * hd]
            logits = np.array([qv @ qkv[q][C + m * hd:C + (m + 1) * hd] / math.sqrt(hd) for q in seen])
            wts = np.exp(logits - logits.max())
            wts /= wts.sum()
            att[m * hd:(m + 1) * hd] = sum(wt * qkv[q][2 * C + m * hd:2 * C + (m + 1) * hd]
                                           for wt, q in zip(wts, seen))
        out[p] = x[p] + att @ P[f"{pre}.proj.w"] + P[f"{pre}.proj.b"]
    for p in tokens:
        z = ln(out[p], P[f"{pre}.ln2.g"], P[f"{pre}.ln2.b"])
        out[p] = out[p] + gelu(z @ P[f"{pre}.fc1.w"] + P[f"{pre}.fc1.b"]) @ P[f"{pre}.fc2.w"] + P[f"{pre}.fc2.b"]
    return out


def merge(x, P, pre):
    D, H, W, C = x.shape
    y = np.zeros((D, H // 2, W // 2, P[f"{pre}.w"].shape[1]))
    for d, i, j in itertools.product(range(D), range(H // 2), range(W // 2)):
        v = np.concatenate([x[d, 2 * i + a, 2 * j + b] for a in (0, 1) for b in (0, 1)])
        y[d, i, j] = ln(v, P[f"{pre}.ln.g"], P[f"{pre}.ln.b"]) @ P[f"{pre}.w"]
    return y


def expand(x, P, pre):
    D, H, W, _ = x.shape
    C = P[f"{pre}.w"].shape[1] // 4
    y = np.zeros((D, 2 * H, 2 * W, C))
    for d, i, j in itertools.product(range(D), range(H), range(W)):
        v = x[d, i, j] @ P[f"{pre}.w"]
        for n, (a, b) in enumerate([(0, 0), (0, 1), (1, 0), (1, 1)]):
            y[d, 2 * i + a, 2 * j + b] = v[n * C:(n + 1) * C]
    return y


def forward(P, cfg, stats, x_prev, x_t, f_prev, f_t, periodic_lon=True):
    """Increment (V, D, H, W) for one sample on a grid needing no padding."""
    V, D, H, W = x_t.shape
    pd, ph, pw = cfg.patch
    assert D % pd == 0 and H % ph == 0 and W % pw == 0
    z = []
    for x in (x_prev, x_t):
        for v in range(V):
            zz = np.zeros((D, H, W))
            for k in range(D):
                zz[k] = (x[v, k] - stats.mean[v, k]) / stats.std[v, k]
            z.append(np.where(np.isfinite(zz), zz, 0.0))
    g = []
    for f in (f_prev, f_t):
        for c in range(f.shape[0]):
            g.append((f[c] - stats.forcing_mean[c]) / stats.forcing_std[c])
    grid = (D // pd, H // ph, W // pw)
    C = cfg.embed_dim
    x = np.zeros(grid + (C,))
    for d, i, j in itertools.product(*(range(n) for n in grid)):
        vec = [z[c][d * pd + a, i * ph + b, j * pw + e]
               for c in range(len(z)) for a in range(pd) for b in range(ph) for e in range(pw)]
        fv = [g[c][i * ph + b, j * pw + e] for c in range(len(g)) for b in range(ph) for e in range(pw)]
        x[d, i, j] = (np.array(vec) @ P["embed.ocean.w"] + P["embed.ocean.b"]
                      + np.array(fv) @ P["embed.forcing.w"] + P["embed.forcing.b"])
    if cfg.pos_embed:
        x = x + P["pos"]
    skips = []
    for r in range(cfg.levels):
        for b in range(cfg.enc_depths[r]):
            x = block(x, P, f"enc{r}.block{b}", cfg.window, b % 2 == 1, cfg.heads, periodic_lon)
        skips.append(x)
        x = merge(x, P, f"enc{r}.merge")
    for b in range(cfg.mid_depth):
        x = block(x, P, f"mid.block{b}", cfg.window, b % 2 == 1, cfg.heads, periodic_lon)
    for r in reversed(range(cfg.levels)):
        x = expand(x, P, f"dec{r}.expand") + skips[r]
        for b in range(cfg.dec_depths[r]):
            x = block(x, P, f"dec{r}.block{b}", cfg.window, b % 2 == 1, cfg.heads, periodic_lon)
    out = np.zeros((V, D, H, W))
    for d, i, j in itertools.product(*(range(n) for n in grid)):
        y = ln(x[d, i, j], P["head.ln.g"], P["head.ln.b"]) @ P["head.w"] + P["head.b"]
        n = 0
        for v in range(V):
            for a in range(pd):
                for b in range(ph):
                    for e in range(pw):
                        out[v, d * pd + a, i * ph + b, j * pw + e] = y[n] * stats.std[v, d * pd + a]
                        n += 1
    return out
