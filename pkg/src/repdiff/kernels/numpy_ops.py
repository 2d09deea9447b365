"""Pure-numpy reference implementations of the hot kernels.

Activation layout is NHWC throughout; im2col produces (N*H*W, 9*C) column
matrices ordered (ky, kx, c) so a GEMM against weights reshaped to
(9*C_in, C_out) yields NHWC output directly, with no transposes.
"""

import numpy as np


def im2col3(x: np.ndarray) -> np.ndarray:
    """Unfold 3x3 neighborhoods (pad 1, stride 1) of an NHWC tensor."""
    n, h, w, c = x.shape
    xp = np.zeros((n, h + 2, w + 2, c), dtype=x.dtype)
    xp[:, 1 : h + 1, 1 : w + 1, :] = x
    cols = np.empty((n, h, w, 3, 3, c), dtype=x.dtype)
    for ky in range(3):
        for kx in range(3):
            cols[:, :, :, ky, kx, :] = xp[:, ky : ky + h, kx : kx + w, :]
    return cols.reshape(n * h * w, 9 * c)


def col2im3(cols: np.ndarray, n: int, h: int, w: int, c: int) -> np.ndarray:
    """Adjoint of im2col3: scatter-add columns back onto an NHWC tensor."""
    cols6 = cols.reshape(n, h, w, 3, 3, c)
    xp = np.zeros((n, h + 2, w + 2, c), dtype=cols.dtype)
    for ky in range(3):
        for kx in range(3):
            xp[:, ky : ky + h, kx : kx + w, :] += cols6[:, :, :, ky, kx, :]
    return xp[:, 1 : h + 1, 1 : w + 1, :]


def conv3_fwd(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """3x3 convolution (pad 1, stride 1) as one im2col plus one GEMM."""
    n, h, wd, c = x.shape
    co = w.shape[3]
    y = im2col3(x) @ w.reshape(9 * c, co)
    y += b
    return y.reshape(n, h, wd, co)


def conv3_bwd(dy: np.ndarray, x: np.ndarray, w: np.ndarray):
    """Gradients of conv3_fwd; returns (dx, dw, db).

    Re-packs x rather than caching forward columns: the column matrix is
    nine times the activation size, so recompute wins on memory.
    """
    n, h, wd, c = x.shape
    co = w.shape[3]
    cols = im2col3(x)
    dyf = dy.reshape(n * h * wd, co)
    dw = (cols.T @ dyf).reshape(w.shape)
    db = dyf.sum(axis=0)
    dx = col2im3(dyf @ w.reshape(9 * c, co).T, n, h, wd, c)
    return dx, dw, db


def groupnorm_fwd(x3, gamma, beta, groups, eps):
    """Group normalization over (spatial, channels-in-group).

    x3 is (N, HW, C); returns (y3, mean, rstd) with mean/rstd of shape
    (N, groups) for reuse in the backward pass.
    """
    n, hw, c = x3.shape
    cs = c // groups
    xg = x3.reshape(n, hw, groups, cs)
    mean = xg.mean(axis=(1, 3))
    var = xg.var(axis=(1, 3))
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = (xg - mean[:, None, :, None]) * rstd[:, None, :, None]
    y = xhat.reshape(n, hw, c) * gamma + beta
    return y, mean, rstd


def groupnorm_bwd(dy3, x3, gamma, mean, rstd, groups):
    """Gradient of groupnorm_fwd; returns (dx3, dgamma, dbeta)."""
    n, hw, c = x3.shape
    cs = c // groups
    xg = x3.reshape(n, hw, groups, cs)
    xhat = (xg - mean[:, None, :, None]) * rstd[:, None, :, None]
    dxhat = (dy3 * gamma).reshape(n, hw, groups, cs)
    dgamma = (dy3 * xhat.reshape(n, hw, c)).sum(axis=(0, 1))
    dbeta = dy3.sum(axis=(0, 1))
    m1 = dxhat.mean(axis=(1, 3))
    m2 = (dxhat * xhat).mean(axis=(1, 3))
    dx = rstd[:, None, :, None] * (dxhat - m1[:, None, :, None] - xhat * m2[:, None, :, None])
    return dx.reshape(n, hw, c), dgamma, dbeta


def silu_fwd(x: np.ndarray) -> np.ndarray:
    return x / (1.0 + np.exp(-x))


def silu_bwd(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    s = 1.0 / (1.0 + np.exp(-x))
    return dy * s * (1.0 + x * (1.0 - s))
