"""Differentiable layer primitives in NHWC layout.

Each op comes as a forward returning what the matching backward needs.
Convolution backwards take the forward input rather than a packed cache:
the backend repacks or re-pads as needed, which keeps cached state at 1x
activation size.
"""

from __future__ import annotations

import numpy as np

from repdiff import kernels

GN_EPS = 1e-5


def norm_groups(channels: int) -> int:
    for g in (8, 4, 2, 1):
        if channels % g == 0:
            return g
    return 1


def conv3_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return kernels.conv3_fwd(np.ascontiguousarray(x), w, b)


def conv3_backward(dy: np.ndarray, x: np.ndarray, w: np.ndarray):
    return kernels.conv3_bwd(np.ascontiguousarray(dy), np.ascontiguousarray(x), w)


def conv1_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return x @ w + b


def conv1_backward(dy: np.ndarray, x: np.ndarray, w: np.ndarray):
    cin, cout = w.shape
    dw = x.reshape(-1, cin).T @ dy.reshape(-1, cout)
    db = dy.reshape(-1, cout).sum(axis=0)
    dx = dy @ w.T
    return dx, dw, db


def linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return x @ w + b


def linear_backward(dy: np.ndarray, x: np.ndarray, w: np.ndarray):
    return dy @ w.T, x.T @ dy, dy.sum(axis=0)


def groupnorm_forward(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray):
    n, h, w, c = x.shape
    g = norm_groups(c)
    x3 = np.ascontiguousarray(x).reshape(n, h * w, c)
    y3, mean, rstd = kernels.groupnorm_fwd(x3, gamma, beta, g, GN_EPS)
    return y3.reshape(x.shape), (x3, mean, rstd, g)


def groupnorm_backward(dy: np.ndarray, gamma: np.ndarray, cache):
    x3, mean, rstd, g = cache
    n, hw, c = x3.shape
    dy3 = np.ascontiguousarray(dy).reshape(n, hw, c)
    dx3, dgamma, dbeta = kernels.groupnorm_bwd(dy3, x3, gamma, mean, rstd, g)
    return dx3.reshape(dy.shape), dgamma, dbeta


def silu_forward(x: np.ndarray) -> np.ndarray:
    return kernels.silu_fwd(x)


def silu_backward(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    return kernels.silu_bwd(dy, x)


def film_forward(a: np.ndarray, scale: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """Per-channel y = a * (1 + scale) + shift, scale/shift of shape (N, C)."""
    return a * (1.0 + scale[:, None, None, :]) + shift[:, None, None, :]


def film_backward(dy: np.ndarray, a: np.ndarray, scale: np.ndarray):
    da = dy * (1.0 + scale[:, None, None, :])
    dscale = (dy * a).sum(axis=(1, 2))
    dshift = dy.sum(axis=(1, 2))
    return da, dscale, dshift


def avgpool2_forward(x: np.ndarray) -> np.ndarray:
    n, h, w, c = x.shape
    return x.reshape(n, h // 2, 2, w // 2, 2, c).mean(axis=(2, 4))


def avgpool2_backward(dy: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(dy, 2, axis=1), 2, axis=2) * 0.25


def upsample2_forward(x: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)


def upsample2_backward(dy: np.ndarray) -> np.ndarray:
    n, h, w, c = dy.shape
    return dy.reshape(n, h // 2, 2, w // 2, 2, c).sum(axis=(2, 4))


def timestep_embedding(t: np.ndarray, dim: int, dtype=np.float32) -> np.ndarray:
    """Sinusoidal embedding of integer timesteps; (N,) -> (N, dim), dim even."""
    half = dim // 2
    if half > 1:
        freqs = np.power(10000.0, -np.arange(half, dtype=np.float64) / (half - 1))
    else:
        freqs = np.ones(1)
    args = np.asarray(t, dtype=np.float64)[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(args), np.cos(args)], axis=1)
    return emb.astype(dtype)
