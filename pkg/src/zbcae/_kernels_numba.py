"""Numba loop kernels (default backend).

Mirrors ``zbcae._kernels_numpy`` contract for contract. All kernels are
single-threaded and accumulate in the input dtype, so float32 networks
compute in float32 and the float64 gradient-check mode computes in float64.
``fastmath`` stays off to keep summation order, and therefore results,
bit-stable.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def conv_valid(x, f):
    n, c, h, w = x.shape
    k, kh, kw = f.shape[0], f.shape[2], f.shape[3]
    oh, ow = h - kh + 1, w - kw + 1
    out = np.zeros((n, k, oh, ow), x.dtype)
    for b in range(n):
        for o in range(k):
            for ci in range(c):
                for u in range(kh):
                    for v in range(kw):
                        wgt = f[o, ci, u, v]
                        for i in range(oh):
                            for j in range(ow):
                                out[b, o, i, j] += wgt * x[b, ci, i + u, j + v]
    return out


@njit(cache=True)
def conv_full_transpose(y, f):
    n, k, h, w = y.shape
    c, kh, kw = f.shape[1], f.shape[2], f.shape[3]
    out = np.zeros((n, c, h + kh - 1, w + kw - 1), y.dtype)
    for b in range(n):
        for o in range(k):
            for ci in range(c):
                for u in range(kh):
                    for v in range(kw):
                        wgt = f[o, ci, u, v]
                        for i in range(h):
                            for j in range(w):
                                out[b, ci, i + u, j + v] += wgt * y[b, o, i, j]
    return out


@njit(cache=True)
def conv_grad_filters(x, g, k, c, kh, kw):
    n = x.shape[0]
    oh, ow = g.shape[2], g.shape[3]
    df = np.zeros((k, c, kh, kw), x.dtype)
    for o in range(k):
        for ci in range(c):
            for u in range(kh):
                for v in range(kw):
                    s = df[o, ci, u, v]
                    for b in range(n):
                        for i in range(oh):
                            for j in range(ow):
                                s += x[b, ci, i + u, j + v] * g[b, o, i, j]
                    df[o, ci, u, v] = s
    return df


@njit(cache=True)
def maxpool(x, p):
    n, c, h, w = x.shape
    h2, w2 = h // p, w // p
    out = np.zeros((n, c, h2, w2), x.dtype)
    sw = np.zeros((n, c, h2, w2), np.int64)
    for b in range(n):
        for ci in range(c):
            for i in range(h2):
                for j in range(w2):
                    best = x[b, ci, i * p, j * p]
                    arg = 0
                    for u in range(p):
                        for v in range(p):
                            val = x[b, ci, i * p + u, j * p + v]
                            if val > best:
                                best = val
                                arg = u * p + v
                    out[b, ci, i, j] = best
                    sw[b, ci, i, j] = arg
    return out, sw


@njit(cache=True)
def unpool(y, sw, p):
    n, c, h2, w2 = y.shape
    out = np.zeros((n, c, h2 * p, w2 * p), y.dtype)
    for b in range(n):
        for ci in range(c):
            for i in range(h2):
                for j in range(w2):
                    s = sw[b, ci, i, j]
                    out[b, ci, i * p + s // p, j * p + s % p] = y[b, ci, i, j]
    return out


@njit(cache=True)
def unpool_grad(g, sw, p):
    n, c, h2, w2 = sw.shape
    out = np.zeros((n, c, h2, w2), g.dtype)
    for b in range(n):
        for ci in range(c):
            for i in range(h2):
                for j in range(w2):
                    s = sw[b, ci, i, j]
                    out[b, ci, i, j] = g[b, ci, i * p + s // p, j * p + s % p]
    return out


@njit(cache=True)
def quadrant_pool(x):
    n, c, h, w = x.shape
    hm, wm = (h + 1) // 2, (w + 1) // 2
    out = np.zeros((n, c, 2, 2), x.dtype)
    idx = np.zeros((n, c, 2, 2), np.int64)
    for b in range(n):
        for ci in range(c):
            for qi in range(2):
                r0 = 0 if qi == 0 else hm
                r1 = hm if qi == 0 else h
                for qj in range(2):
                    c0 = 0 if qj == 0 else wm
                    c1 = wm if qj == 0 else w
                    best = x[b, ci, r0, c0]
                    bi, bj = r0, c0
                    for i in range(r0, r1):
                        for j in range(c0, c1):
                            if x[b, ci, i, j] > best:
                                best = x[b, ci, i, j]
                                bi, bj = i, j
                    out[b, ci, qi, qj] = best
                    idx[b, ci, qi, qj] = bi * w + bj
    return out, idx


@njit(cache=True)
def quadrant_scatter(y, idx, h, w):
    n, c = y.shape[0], y.shape[1]
    out = np.zeros((n, c, h, w), y.dtype)
    for b in range(n):
        for ci in range(c):
            for qi in range(2):
                for qj in range(2):
                    pos = idx[b, ci, qi, qj]
                    out[b, ci, pos // w, pos % w] = y[b, ci, qi, qj]
    return out


@njit(cache=True)
def quadrant_gather(g, idx):
    n, c, w = g.shape[0], g.shape[1], g.shape[3]
    out = np.zeros((n, c, 2, 2), g.dtype)
    for b in range(n):
        for ci in range(c):
            for qi in range(2):
                for qj in range(2):
                    pos = idx[b, ci, qi, qj]
                    out[b, ci, qi, qj] = g[b, ci, pos // w, pos % w]
    return out
