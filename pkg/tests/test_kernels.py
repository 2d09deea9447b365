import numpy as np
import pytest

from repdiff import kernels
from repdiff.errors import ValidationError
from repdiff.kernels import numpy_ops

BACKENDS = kernels.available_backends()


@pytest.fixture(autouse=True)
def restore_backend():
    before = kernels.active_backend()
    yield
    kernels.set_backend(before)


def test_backend_selection():
    assert kernels.set_backend("numpy") == "numpy"
    assert kernels.active_backend() == "numpy"
    resolved = kernels.set_backend("auto")
    assert resolved in BACKENDS
    with pytest.raises(ValidationError):
        kernels.set_backend("fortran")


def test_im2col_known_layout():
    # single pixel at (0, 0): its value appears once per kernel tap that
    # reaches it, at the column slot for that tap
    x = np.zeros((1, 3, 3, 1))
    x[0, 0, 0, 0] = 5.0
    cols = numpy_ops.im2col3(x).reshape(9, 9)
    center = cols[0]
    # output pixel (0,0): tap (ky=1,kx=1) is the center hit
    assert center[4] == 5.0


@pytest.mark.parametrize("backend", BACKENDS)
def test_im2col_col2im_adjoint(backend):
    # <im2col(x), C> == <x, col2im(C)> pins col2im as the exact adjoint
    kernels.set_backend(backend)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 5, 4, 3))
    c = rng.standard_normal((2 * 5 * 4, 27))
    lhs = float(np.sum(kernels.im2col3(x) * c))
    rhs = float(np.sum(x * kernels.col2im3(c, 2, 5, 4, 3)))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_backends_agree_on_packing():
    if "numba" not in BACKENDS:
        pytest.skip("numba backend unavailable")
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 8, 8, 4)).astype(np.float32)
    from repdiff.kernels import numba_ops

    np.testing.assert_array_equal(numpy_ops.im2col3(x), numba_ops.im2col3(x))
    c = rng.standard_normal((2 * 8 * 8, 36)).astype(np.float32)
    np.testing.assert_allclose(
        numpy_ops.col2im3(c, 2, 8, 8, 4), numba_ops.col2im3(c, 2, 8, 8, 4), atol=1e-6
    )


@pytest.mark.parametrize("dtype,rtol", [(np.float32, 2e-4), (np.float64, 1e-12)])
def test_conv3_backends_agree(dtype, rtol):
    if "numba" not in BACKENDS:
        pytest.skip("numba backend unavailable")
    from repdiff.kernels import numba_ops

    rng = np.random.default_rng(2)
    for n, h, wd, ci, co in ((3, 8, 8, 5, 7), (2, 16, 16, 32, 64), (1, 4, 4, 1, 3)):
        x = rng.standard_normal((n, h, wd, ci)).astype(dtype)
        w = rng.standard_normal((3, 3, ci, co)).astype(dtype)
        b = rng.standard_normal(co).astype(dtype)
        dy = rng.standard_normal((n, h, wd, co)).astype(dtype)
        ya = numpy_ops.conv3_fwd(x, w, b)
        yb = numba_ops.conv3_fwd(x, w, b)
        np.testing.assert_allclose(ya, yb, rtol=rtol, atol=rtol)
        for ga, gb in zip(numpy_ops.conv3_bwd(dy, x, w), numba_ops.conv3_bwd(dy, x, w)):
            scale = max(np.abs(ga).max(), 1e-9)
            assert np.abs(ga - gb).max() / scale <= rtol


@pytest.mark.parametrize("backend", BACKENDS)
def test_conv3_gradients_match_finite_differences(backend):
    kernels.set_backend(backend)
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 4, 4, 2))
    w = rng.standard_normal((3, 3, 2, 3))
    b = rng.standard_normal(3)
    dy = rng.standard_normal((2, 4, 4, 3))

    def loss(x_, w_, b_):
        return float(np.sum(kernels.conv3_fwd(x_, w_, b_) * dy))

    dx, dw, db = kernels.conv3_bwd(dy, x, w)
    h = 1e-6
    for arr, grad in ((x, dx), (w, dw), (b, db)):
        flat, gflat = arr.ravel(), grad.ravel()
        idx = rng.choice(flat.size, size=min(10, flat.size), replace=False)
        for i in idx:
            old = flat[i]
            flat[i] = old + h
            up = loss(x, w, b)
            flat[i] = old - h
            dn = loss(x, w, b)
            flat[i] = old
            num = (up - dn) / (2 * h)
            assert num == pytest.approx(gflat[i], rel=1e-5, abs=1e-7)


@pytest.mark.parametrize("backend", BACKENDS)
def test_groupnorm_against_direct_statistics(backend):
    kernels.set_backend(backend)
    rng = np.random.default_rng(4)
    n, hw, c, groups, eps = 3, 10, 8, 4, 1e-5
    x3 = rng.standard_normal((n, hw, c))
    gamma = rng.standard_normal(c)
    beta = rng.standard_normal(c)
    y, mean, rstd = kernels.groupnorm_fwd(x3, gamma, beta, groups, eps)
    cs = c // groups
    for i in range(n):
        for g in range(groups):
            block = x3[i, :, g * cs : (g + 1) * cs]
            assert mean[i, g] == pytest.approx(block.mean(), rel=1e-10)
            assert rstd[i, g] == pytest.approx(1 / np.sqrt(block.var() + eps), rel=1e-10)
            expected = (block - block.mean()) / np.sqrt(block.var() + eps)
            expected = expected * gamma[g * cs : (g + 1) * cs] + beta[g * cs : (g + 1) * cs]
            np.testing.assert_allclose(y[i, :, g * cs : (g + 1) * cs], expected, rtol=1e-9, atol=1e-9)


@pytest.mark.parametrize("backend", BACKENDS)
def test_groupnorm_gradients_match_finite_differences(backend):
    kernels.set_backend(backend)
    rng = np.random.default_rng(5)
    n, hw, c, groups, eps = 2, 6, 4, 2, 1e-5
    x3 = rng.standard_normal((n, hw, c))
    gamma = rng.standard_normal(c)
    beta = rng.standard_normal(c)
    dy = rng.standard_normal((n, hw, c))

    def loss(x_, g_, b_):
        return float(np.sum(kernels.groupnorm_fwd(x_, g_, b_, groups, eps)[0] * dy))

    _, mean, rstd = kernels.groupnorm_fwd(x3, gamma, beta, groups, eps)
    dx, dgamma, dbeta = kernels.groupnorm_bwd(dy, x3, gamma, mean, rstd, groups)
    h = 1e-6
    for arr, grad in ((x3, dx), (gamma, dgamma), (beta, dbeta)):
        flat, gflat = arr.ravel(), grad.ravel()
        idx = rng.choice(flat.size, size=min(8, flat.size), replace=False)
        for i in idx:
            old = flat[i]
            flat[i] = old + h
            up = loss(x3, gamma, beta)
            flat[i] = old - h
            dn = loss(x3, gamma, beta)
            flat[i] = old
            num = (up - dn) / (2 * h)
            assert num == pytest.approx(gflat[i], rel=2e-5, abs=1e-7)


@pytest.mark.parametrize("backend", BACKENDS)
def test_silu_values_and_gradient(backend):
    kernels.set_backend(backend)
    rng = np.random.default_rng(6)
    x = rng.standard_normal((3, 5))
    expected = x / (1 + np.exp(-x))
    np.testing.assert_allclose(kernels.silu_fwd(x), expected, rtol=1e-12)
    dy = rng.standard_normal((3, 5))
    grad = kernels.silu_bwd(dy, x)
    h = 1e-6
    num = (kernels.silu_fwd(x + h) - kernels.silu_fwd(x - h)) / (2 * h) * dy
    np.testing.assert_allclose(grad, num, rtol=1e-5, atol=1e-8)


def test_silu_noncontiguous_input():
    rng = np.random.default_rng(7)
    base = rng.standard_normal((4, 6))
    view = base[:, ::2]
    np.testing.assert_allclose(kernels.silu_fwd(view), view / (1 + np.exp(-view)), rtol=1e-12)
