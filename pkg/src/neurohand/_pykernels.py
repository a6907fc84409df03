"""Pure numpy implementations of the hot kernels.

Every function here has a twin with an identical signature in the compiled
``_ckernels`` extension. Inputs are assumed validated and C-contiguous float64.
"""

import numpy as np


def correlate2d(img, kern, zero_border):
    kh, kw = kern.shape
    ry, rx = kh // 2, kw // 2
    mode = "constant" if zero_border else "edge"
    padded = np.pad(img, ((ry, ry), (rx, rx)), mode=mode)
    h, w = img.shape
    out = np.zeros((h, w))
    for i in range(kh):
        for j in range(kw):
            tap = kern[i, j]
            if tap != 0.0:
                out += tap * padded[i:i + h, j:j + w]
    return out


def rasterize_capsules(height, width, segs):
    """0/1 mask of pixel centres lying within distance r of any segment (x0, y0, x1, y1, r)."""
    out = np.zeros((height, width))
    ys, xs = np.mgrid[0:height, 0:width].astype(float)
    for x0, y0, x1, y1, r in segs:
        dx, dy = x1 - x0, y1 - y0
        ll = dx * dx + dy * dy
        # bounding box keeps the per-capsule work local
        c0 = max(int(np.floor(min(x0, x1) - r)), 0)
        c1 = min(int(np.ceil(max(x0, x1) + r)) + 1, width)
        r0 = max(int(np.floor(min(y0, y1) - r)), 0)
        r1 = min(int(np.ceil(max(y0, y1) + r)) + 1, height)
        if c0 >= c1 or r0 >= r1:
            continue
        px = xs[r0:r1, c0:c1] - x0
        py = ys[r0:r1, c0:c1] - y0
        if ll > 0.0:
            t = np.clip((px * dx + py * dy) / ll, 0.0, 1.0)
        else:
            t = 0.0
        ex = px - t * dx
        ey = py - t * dy
        inside = ex * ex + ey * ey <= r * r
        out[r0:r1, c0:c1][inside] = 1.0
    return out


def _sqdist_row(x, centers):
    diff = centers - x
    return np.einsum("kd,kd->k", diff, diff)


def assign(samples, centers):
    """Index of the nearest centre for every sample; ties go to the lowest index."""
    out = np.empty(len(samples), dtype=np.int64)
    for n, x in enumerate(samples):
        out[n] = int(np.argmin(_sqdist_row(x, centers)))
    return out


def vq_online(samples, centers, order, rates):
    """Winner-take-all online quantisation; updates ``centers`` in place."""
    for idx, rate in zip(order, rates):
        x = samples[idx]
        k = int(np.argmin(_sqdist_row(x, centers)))
        centers[k] += rate * (x - centers[k])
    return centers


def _lagrange4(t):
    """Cubic Lagrange weights on nodes 0..3 and their derivatives; t has shape (m,)."""
    a, b, c, d = t, t - 1.0, t - 2.0, t - 3.0
    w = np.stack([-b * c * d / 6.0, a * c * d / 2.0, -a * b * d / 2.0, a * b * c / 6.0], axis=1)
    dw = np.stack([
        -(c * d + b * d + b * c) / 6.0,
        (c * d + a * d + a * c) / 2.0,
        -(b * d + a * d + a * b) / 2.0,
        (b * c + a * c + a * b) / 6.0,
    ], axis=1)
    return w, dw


def _psom_eval(emb, s):
    wu, du = _lagrange4(s[:, 0])
    wv, dv = _lagrange4(s[:, 1])
    m = np.einsum("mi,mj,ijq->mq", wu, wv, emb)
    mu = np.einsum("mi,mj,ijq->mq", du, wv, emb)
    mv = np.einsum("mi,mj,ijq->mq", wu, dv, emb)
    return m, mu, mv


def _objective(emb, obs, s):
    m, mu, mv = _psom_eval(emb, s)
    r = m - obs
    f = np.einsum("mq,mq->m", r, r)
    g = np.stack([2.0 * np.einsum("mq,mq->m", r, mu), 2.0 * np.einsum("mq,mq->m", r, mv)], axis=1)
    return f, g


def _projected_grad(s, g, hi):
    pg = g.copy()
    pg[(s <= 0.0) & (g > 0.0)] = 0.0
    pg[(s >= hi) & (g < 0.0)] = 0.0
    return pg


def psom_descend(emb, obs, starts, maxiter, gtol):
    """Box-projected gradient descent with Armijo backtracking, batched over starts.

    ``emb`` has shape (4, 4, q) and holds only the observed (masked, scaled)
    components; ``obs`` has shape (q,). Trial steps use the Barzilai-Borwein
    length and are halved until sufficient decrease holds.

    Returns (s, f, pgnorm, iters) per start.
    """
    hi = 3.0
    s = np.clip(np.array(starts, dtype=float), 0.0, hi)
    m = len(s)
    f, g = _objective(emb, obs, s)
    step = np.ones(m)
    iters = np.zeros(m, dtype=np.int64)
    active = np.ones(m, dtype=bool)
    pgn = np.linalg.norm(_projected_grad(s, g, hi), axis=1)
    active &= pgn > gtol
    for _ in range(maxiter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        sa, fa, ga, ta = s[idx], f[idx], g[idx], step[idx]
        accepted = np.zeros(len(idx), dtype=bool)
        s_new, f_new, g_new = sa.copy(), fa.copy(), ga.copy()
        t = ta.copy()
        for _bt in range(60):
            todo = ~accepted
            if not todo.any():
                break
            trial = np.clip(sa[todo] - t[todo, None] * ga[todo], 0.0, hi)
            ft, gt = _objective(emb, obs, trial)
            dec = np.einsum("mk,mk->m", ga[todo], sa[todo] - trial)
            ok = ft <= fa[todo] - 1e-4 * dec
            tid = np.flatnonzero(todo)
            acc = tid[ok]
            s_new[acc], f_new[acc], g_new[acc] = trial[ok], ft[ok], gt[ok]
            accepted[acc] = True
            t[tid[~ok]] *= 0.5
        # Barzilai-Borwein length for the next trial step
        ds = s_new - sa
        dg = g_new - ga
        sy = np.einsum("mk,mk->m", ds, dg)
        ss = np.einsum("mk,mk->m", ds, ds)
        bb = np.where(sy > 0.0, ss / np.where(sy > 0.0, sy, 1.0), 2.0 * t)
        step[idx] = np.clip(bb, 1e-12, 1e12)
        s[idx], f[idx], g[idx] = s_new, f_new, g_new
        iters[idx] += 1
        pg = np.linalg.norm(_projected_grad(s_new, g_new, hi), axis=1)
        pgn[idx] = pg
        stalled = ~accepted | (ss == 0.0)
        active[idx] = (pg > gtol) & ~stalled
    return s, f, pgn, iters
