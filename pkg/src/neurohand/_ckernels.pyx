# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_pykernels``; same signatures, same algorithms."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, ceil, sqrt

cnp.import_array()


def correlate2d(double[:, ::1] img, double[:, ::1] kern, bint zero_border):
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    cdef Py_ssize_t kh = kern.shape[0], kw = kern.shape[1]
    cdef Py_ssize_t ry = kh // 2, rx = kw // 2
    cdef Py_ssize_t y, x, i, j, yy, xx
    cdef double acc, v
    out_arr = np.zeros((h, w))
    cdef double[:, ::1] out = out_arr
    # tap-major order matches the numpy fallback's accumulation order
    for i in range(kh):
        for j in range(kw):
            v = kern[i, j]
            if v == 0.0:
                continue
            for y in range(h):
                yy = y + i - ry
                if yy < 0 or yy >= h:
                    if zero_border:
                        continue
                    yy = 0 if yy < 0 else h - 1
                for x in range(w):
                    xx = x + j - rx
                    if xx < 0 or xx >= w:
                        if zero_border:
                            continue
                        xx = 0 if xx < 0 else w - 1
                    out[y, x] += v * img[yy, xx]
    return out_arr


def rasterize_capsules(Py_ssize_t height, Py_ssize_t width, double[:, ::1] segs):
    out_arr = np.zeros((height, width))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t n, row, col, c0, c1, r0, r1
    cdef double x0, y0, x1, y1, r, dx, dy, ll, px, py, t, ex, ey
    for n in range(segs.shape[0]):
        x0 = segs[n, 0]; y0 = segs[n, 1]; x1 = segs[n, 2]; y1 = segs[n, 3]; r = segs[n, 4]
        dx = x1 - x0
        dy = y1 - y0
        ll = dx * dx + dy * dy
        c0 = max(<Py_ssize_t>floor(min(x0, x1) - r), 0)
        c1 = min(<Py_ssize_t>ceil(max(x0, x1) + r) + 1, width)
        r0 = max(<Py_ssize_t>floor(min(y0, y1) - r), 0)
        r1 = min(<Py_ssize_t>ceil(max(y0, y1) + r) + 1, height)
        for row in range(r0, r1):
            for col in range(c0, c1):
                px = col - x0
                py = row - y0
                if ll > 0.0:
                    t = (px * dx + py * dy) / ll
                    if t < 0.0:
                        t = 0.0
                    elif t > 1.0:
                        t = 1.0
                else:
                    t = 0.0
                ex = px - t * dx
                ey = py - t * dy
                if ex * ex + ey * ey <= r * r:
                    out[row, col] = 1.0
    return out_arr


cdef inline Py_ssize_t _nearest(double[:, ::1] samples, Py_ssize_t n, double[:, ::1] centers) nogil:
    cdef Py_ssize_t k, d, best = 0
    cdef double acc, diff, bestd = 0.0
    for k in range(centers.shape[0]):
        acc = 0.0
        for d in range(centers.shape[1]):
            diff = centers[k, d] - samples[n, d]
            acc += diff * diff
        if k == 0 or acc < bestd:
            bestd = acc
            best = k
    return best


def assign(double[:, ::1] samples, double[:, ::1] centers):
    cdef Py_ssize_t n
    out_arr = np.empty(samples.shape[0], dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr
    for n in range(samples.shape[0]):
        out[n] = _nearest(samples, n, centers)
    return out_arr


def vq_online(double[:, ::1] samples, double[:, ::1] centers, cnp.int64_t[::1] order, double[::1] rates):
    cdef Py_ssize_t t, k, d, n
    cdef double rate
    for t in range(order.shape[0]):
        n = order[t]
        rate = rates[t]
        k = _nearest(samples, n, centers)
        for d in range(centers.shape[1]):
            centers[k, d] += rate * (samples[n, d] - centers[k, d])
    return np.asarray(centers)


cdef inline void _lagrange4(double t, double* w, double* dw) nogil:
    cdef double a = t, b = t - 1.0, c = t - 2.0, d = t - 3.0
    w[0] = -b * c * d / 6.0
    w[1] = a * c * d / 2.0
    w[2] = -a * b * d / 2.0
    w[3] = a * b * c / 6.0
    dw[0] = -(c * d + b * d + b * c) / 6.0
    dw[1] = (c * d + a * d + a * c) / 2.0
    dw[2] = -(b * d + a * d + a * b) / 2.0
    dw[3] = (b * c + a * c + a * b) / 6.0


cdef double _objective(double[:, :, ::1] emb, double[::1] obs, double su, double sv, double* g) nogil:
    cdef double wu[4]
    cdef double du[4]
    cdef double wv[4]
    cdef double dv[4]
    cdef Py_ssize_t i, j, q
    cdef double m, mu, mv, r, f = 0.0
    _lagrange4(su, wu, du)
    _lagrange4(sv, wv, dv)
    g[0] = 0.0
    g[1] = 0.0
    for q in range(emb.shape[2]):
        m = 0.0
        mu = 0.0
        mv = 0.0
        for i in range(4):
            for j in range(4):
                m += wu[i] * wv[j] * emb[i, j, q]
                mu += du[i] * wv[j] * emb[i, j, q]
                mv += wu[i] * dv[j] * emb[i, j, q]
        r = m - obs[q]
        f += r * r
        g[0] += 2.0 * r * mu
        g[1] += 2.0 * r * mv
    return f


cdef inline double _clip3(double v) nogil:
    if v < 0.0:
        return 0.0
    if v > 3.0:
        return 3.0
    return v


cdef inline double _pgnorm(double su, double sv, double* g) nogil:
    cdef double a = g[0], b = g[1]
    if (su <= 0.0 and a > 0.0) or (su >= 3.0 and a < 0.0):
        a = 0.0
    if (sv <= 0.0 and b > 0.0) or (sv >= 3.0 and b < 0.0):
        b = 0.0
    return sqrt(a * a + b * b)


def psom_descend(double[:, :, ::1] emb, double[::1] obs, starts, Py_ssize_t maxiter, double gtol):
    st = np.clip(np.array(starts, dtype=float), 0.0, 3.0)
    cdef Py_ssize_t m = st.shape[0]
    s_arr = np.ascontiguousarray(st)
    f_arr = np.zeros(m)
    pg_arr = np.zeros(m)
    it_arr = np.zeros(m, dtype=np.int64)
    cdef double[:, ::1] s = s_arr
    cdef double[::1] fo = f_arr
    cdef double[::1] pgo = pg_arr
    cdef cnp.int64_t[::1] ito = it_arr
    cdef Py_ssize_t n, it, bt
    cdef double g[2]
    cdef double gt[2]
    cdef double su, sv, f, t, tu, tv, ft, dec, dsu, dsv, sy, ss, pg
    cdef bint accepted
    for n in range(m):
        su = s[n, 0]
        sv = s[n, 1]
        f = _objective(emb, obs, su, sv, g)
        t = 1.0
        pg = _pgnorm(su, sv, g)
        it = 0
        while pg > gtol and it < maxiter:
            accepted = False
            for bt in range(60):
                tu = _clip3(su - t * g[0])
                tv = _clip3(sv - t * g[1])
                ft = _objective(emb, obs, tu, tv, gt)
                dec = g[0] * (su - tu) + g[1] * (sv - tv)
                if ft <= f - 1e-4 * dec:
                    accepted = True
                    break
                t *= 0.5
            it += 1
            if not accepted:
                break
            dsu = tu - su
            dsv = tv - sv
            sy = dsu * (gt[0] - g[0]) + dsv * (gt[1] - g[1])
            ss = dsu * dsu + dsv * dsv
            if sy > 0.0:
                t = ss / sy
            else:
                t = 2.0 * t
            if t < 1e-12:
                t = 1e-12
            elif t > 1e12:
                t = 1e12
            su = tu
            sv = tv
            f = ft
            g[0] = gt[0]
            g[1] = gt[1]
            pg = _pgnorm(su, sv, g)
            if ss == 0.0:
                break
        s[n, 0] = su
        s[n, 1] = sv
        fo[n] = f
        pgo[n] = pg
        ito[n] = it
    return s_arr, f_arr, pg_arr, it_arr
