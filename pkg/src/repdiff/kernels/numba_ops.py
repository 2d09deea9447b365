"""Numba-accelerated versions of the hot kernels.

Same contracts as numpy_ops. Normalization, activation, and packing run
as jitted single fused passes, compiled lazily per dtype and cached on
disk; reductions use a fixed accumulation order so results are
reproducible run to run. The convolutions are not jitted at all: they
restructure the work as nine GEMMs over shifted views of padded buffers,
which removes the column-matrix packing that dominates the im2col route.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def im2col3(x):
    n, h, w, c = x.shape
    cols = np.empty((n * h * w, 9 * c), dtype=x.dtype)
    for ky in range(3):
        for kx in range(3):
            base = (ky * 3 + kx) * c
            xlo = max(0, 1 - kx)
            xhi = min(w, w + 1 - kx)
            for i in range(n):
                for y in range(h):
                    sy = y + ky - 1
                    row0 = (i * h + y) * w
                    if sy < 0 or sy >= h:
                        for xx in range(w):
                            for ch in range(c):
                                cols[row0 + xx, base + ch] = 0.0
                        continue
                    for xx in range(xlo):
                        for ch in range(c):
                            cols[row0 + xx, base + ch] = 0.0
                    for xx in range(xlo, xhi):
                        sx = xx + kx - 1
                        for ch in range(c):
                            cols[row0 + xx, base + ch] = x[i, sy, sx, ch]
                    for xx in range(xhi, w):
                        for ch in range(c):
                            cols[row0 + xx, base + ch] = 0.0
    return cols


@njit(cache=True)
def col2im3(cols, n, h, w, c):
    x = np.zeros((n, h, w, c), dtype=cols.dtype)
    for ky in range(3):
        for kx in range(3):
            base = (ky * 3 + kx) * c
            xlo = max(0, 1 - kx)
            xhi = min(w, w + 1 - kx)
            for i in range(n):
                for y in range(h):
                    sy = y + ky - 1
                    if sy < 0 or sy >= h:
                        continue
                    row0 = (i * h + y) * w
                    for xx in range(xlo, xhi):
                        sx = xx + kx - 1
                        for ch in range(c):
                            x[i, sy, sx, ch] += cols[row0 + xx, base + ch]
    return x


def conv3_fwd(x, w, b):
    """3x3 convolution (pad 1, stride 1) as nine accumulated GEMMs.

    Each filter tap multiplies the whole padded image; shifted views of
    the oversized product select the aligned output window. No packing.
    """
    n, h, wd, c = x.shape
    co = w.shape[3]
    xp = np.zeros((n, h + 2, wd + 2, c), dtype=x.dtype)
    xp[:, 1 : h + 1, 1 : wd + 1, :] = x
    flat = xp.reshape(-1, c)
    y = np.empty((n, h, wd, co), dtype=x.dtype)
    y[:] = b
    full = np.empty((n, h + 2, wd + 2, co), dtype=x.dtype)
    ff = full.reshape(-1, co)
    for ky in range(3):
        for kx in range(3):
            np.matmul(flat, w[ky, kx], out=ff)
            y += full[:, ky : ky + h, kx : kx + wd, :]
    return y


def conv3_bwd(dy, x, w):
    """Gradients of conv3_fwd; returns (dx, dw, db).

    dx is a convolution of dy with the spatially flipped, transposed
    filter, so it reuses the forward formulation. dw contracts padded x
    against row-shifted flat views of padded dy; the shifts land stray
    reads on zero padding, and guard rows at both ends of the buffer
    absorb the shifts that would run off the array.
    """
    n, h, wd, c = x.shape
    co = dy.shape[3]
    m = n * (h + 2) * (wd + 2)
    guard = wd + 3
    dybuf = np.zeros((m + 2 * guard, co), dtype=dy.dtype)
    flat_dy = dybuf[guard : guard + m]
    flat_dy.reshape(n, h + 2, wd + 2, co)[:, 1 : h + 1, 1 : wd + 1, :] = dy
    dx = np.zeros((n, h, wd, c), dtype=dy.dtype)
    full = np.empty((n, h + 2, wd + 2, c), dtype=dy.dtype)
    ff = full.reshape(-1, c)
    for ky in range(3):
        for kx in range(3):
            np.matmul(flat_dy, w[2 - ky, 2 - kx].T, out=ff)
            dx += full[:, ky : ky + h, kx : kx + wd, :]
    xp = np.zeros((n, h + 2, wd + 2, c), dtype=x.dtype)
    xp[:, 1 : h + 1, 1 : wd + 1, :] = x
    flat_x = xp.reshape(-1, c)
    dw = np.empty_like(w)
    for ky in range(3):
        for kx in range(3):
            delta = (1 - ky) * (wd + 2) + (1 - kx)
            np.matmul(flat_x.T, dybuf[guard + delta : guard + delta + m], out=dw[ky, kx])
    db = dy.reshape(-1, co).sum(axis=0)
    return dx, dw, db


@njit(cache=True)
def groupnorm_fwd(x3, gamma, beta, groups, eps):
    n, hw, c = x3.shape
    cs = c // groups
    mean = np.zeros((n, groups), dtype=x3.dtype)
    rstd = np.zeros((n, groups), dtype=x3.dtype)
    y = np.empty_like(x3)
    cnt = hw * cs
    for i in range(n):
        for g in range(groups):
            c0 = g * cs
            acc = 0.0
            for p in range(hw):
                for ch in range(cs):
                    acc += x3[i, p, c0 + ch]
            mu = acc / cnt
            acc2 = 0.0
            for p in range(hw):
                for ch in range(cs):
                    d = x3[i, p, c0 + ch] - mu
                    acc2 += d * d
            rs = 1.0 / np.sqrt(acc2 / cnt + eps)
            mean[i, g] = mu
            rstd[i, g] = rs
            for p in range(hw):
                for ch in range(cs):
                    y[i, p, c0 + ch] = (x3[i, p, c0 + ch] - mu) * rs * gamma[c0 + ch] + beta[c0 + ch]
    return y, mean, rstd


@njit(cache=True)
def groupnorm_bwd(dy3, x3, gamma, mean, rstd, groups):
    n, hw, c = x3.shape
    cs = c // groups
    dx = np.empty_like(x3)
    dgamma = np.zeros(c, dtype=x3.dtype)
    dbeta = np.zeros(c, dtype=x3.dtype)
    cnt = hw * cs
    for i in range(n):
        for g in range(groups):
            c0 = g * cs
            mu = mean[i, g]
            rs = rstd[i, g]
            s1 = 0.0
            s2 = 0.0
            for p in range(hw):
                for ch in range(cs):
                    xh = (x3[i, p, c0 + ch] - mu) * rs
                    dxh = dy3[i, p, c0 + ch] * gamma[c0 + ch]
                    s1 += dxh
                    s2 += dxh * xh
                    dgamma[c0 + ch] += dy3[i, p, c0 + ch] * xh
                    dbeta[c0 + ch] += dy3[i, p, c0 + ch]
            m1 = s1 / cnt
            m2 = s2 / cnt
            for p in range(hw):
                for ch in range(cs):
                    xh = (x3[i, p, c0 + ch] - mu) * rs
                    dxh = dy3[i, p, c0 + ch] * gamma[c0 + ch]
                    dx[i, p, c0 + ch] = rs * (dxh - m1 - xh * m2)
    return dx, dgamma, dbeta


@njit(cache=True)
def silu_fwd_flat(x):
    out = np.empty_like(x)
    for i in range(x.size):
        v = x[i]
        out[i] = v / (1.0 + np.exp(-v))
    return out


@njit(cache=True)
def silu_bwd_flat(dy, x):
    out = np.empty_like(x)
    for i in range(x.size):
        v = x[i]
        s = 1.0 / (1.0 + np.exp(-v))
        out[i] = dy[i] * s * (1.0 + v * (1.0 - s))
    return out


def silu_fwd(x):
    return silu_fwd_flat(np.ascontiguousarray(x).ravel()).reshape(x.shape)


def silu_bwd(dy, x):
    flat = silu_bwd_flat(np.ascontiguousarray(dy).ravel(), np.ascontiguousarray(x).ravel())
    return flat.reshape(x.shape)
