import numpy as np
import pytest

from cylsfm import ops
from cylsfm.errors import BadPad, ShapeMismatch
from cylsfm.gradcheck import check_conv, check_sampler, fd_gradient, max_rel_error
from cylsfm.ops import (Kernel, bilinear_sample_wrap, bilinear_sample_wrap_backward,
                        conv2d_wrap, conv2d_wrap_backward, downsample_half,
                        downsample_half_backward, dxx_wrap, dxy_wrap, dyy,
                        grad_x_wrap, grad_y, upsample_double, wrap_pad)


def row(vals):
    return np.asarray(vals, dtype=np.float64)[None, :, None]


def conv_reference(x, kern, stride=1, wrap=True):
    """Direct O(R*C*k^2*K^2) convolution used as an independent oracle."""
    kh, kw, ci, co = kern.weights.shape
    rows, cols, _ = x.shape
    out = np.zeros((rows // stride, cols // stride, co))
    for r in range(0, rows, stride):
        for c in range(0, cols, stride):
            for o in range(co):
                acc = kern.bias[o]
                for a in range(kh):
                    for b in range(kw):
                        rr = r + a - kh // 2
                        cc = c + b - kw // 2
                        if rr < 0 or rr >= rows:
                            continue
                        if wrap:
                            cc %= cols
                        elif cc < 0 or cc >= cols:
                            continue
                        for i in range(ci):
                            acc += x[rr, cc, i] * kern.weights[a, b, i, o]
                out[r // stride, c // stride, o] = acc
    return out


def test_wrap_pad_examples():
    out = wrap_pad(row([1, 2, 3]), 1)
    assert np.array_equal(out[0, :, 0], [3, 1, 2, 3, 1])
    t = np.arange(24.0).reshape(2, 4, 3)
    assert np.array_equal(wrap_pad(t, 0), t)
    out = wrap_pad(row([1, 2, 3, 4]), 2)
    assert np.array_equal(out[0, :, 0], [3, 4, 1, 2, 3, 4, 1, 2])


def test_wrap_pad_bad():
    with pytest.raises(BadPad):
        wrap_pad(row([1, 2, 3]), 4)


def test_conv_sum_kernel():
    kern = Kernel(np.ones((1, 3, 1, 1)))
    out = conv2d_wrap(row([1, 2, 3]), kern)
    assert np.allclose(out[0, :, 0], [6, 6, 6])


def test_conv_identity_kernel(rng):
    x = rng.uniform(0, 1, (4, 6, 3))
    w = np.zeros((1, 1, 3, 3))
    w[0, 0] = np.eye(3)
    assert np.array_equal(conv2d_wrap(x, Kernel(w)), x)


def test_conv_matches_reference(rng):
    for stride in (1, 2):
        for wrap in (True, False):
            x = rng.standard_normal((6, 8, 2))
            kern = Kernel(rng.standard_normal((3, 3, 2, 3)),
                          rng.standard_normal(3))
            fast = conv2d_wrap(x, kern, stride=stride, wrap=wrap)
            ref = conv_reference(x, kern, stride=stride, wrap=wrap)
            assert np.abs(fast - ref).max() < 1e-10


def test_conv_shift_equivariance(rng):
    x = rng.standard_normal((5, 8, 2))
    kern = Kernel(rng.standard_normal((3, 3, 2, 2)))
    out = conv2d_wrap(x, kern)
    for s in (1, 3, 7):
        shifted = conv2d_wrap(np.roll(x, s, axis=1), kern)
        assert np.array_equal(shifted, np.roll(out, s, axis=1))


def test_conv_channel_mismatch(rng):
    with pytest.raises(ShapeMismatch):
        conv2d_wrap(rng.standard_normal((4, 4, 2)),
                    Kernel(np.zeros((3, 3, 3, 1))))


def test_conv_even_kernel_rejected():
    with pytest.raises(ShapeMismatch):
        Kernel(np.zeros((2, 2, 1, 1)))


def test_sampler_identity_grid(rng):
    img = rng.uniform(0, 1, (5, 7, 3))
    ci = np.broadcast_to(np.arange(7.0), (5, 7))
    cj = np.broadcast_to(np.arange(5.0)[:, None], (5, 7))
    out, valid = bilinear_sample_wrap(img, ci, cj)
    assert np.array_equal(out, img)
    assert valid.min() == 1.0


def test_sampler_seam_interpolation():
    img = row([10.0, 0.0, 0.0, 2.0])
    out, valid = bilinear_sample_wrap(img, np.array([[3.5]]), np.array([[0.0]]))
    assert out[0, 0, 0] == pytest.approx(6.0)
    assert valid[0, 0] == 1.0


def test_sampler_vertical_out_of_bounds(rng):
    img = rng.uniform(0, 1, (4, 4, 1))
    out, valid = bilinear_sample_wrap(img, np.array([[1.0]]), np.array([[-5.0]]))
    assert out[0, 0, 0] == 0.0 and valid[0, 0] == 0.0


def test_sampler_gradients():
    assert check_sampler(trials=8, seed=5) < 1e-4


def test_conv_gradients():
    assert check_conv(trials=8, seed=5) < 1e-4


def test_downsample_examples(rng):
    const = np.full((4, 6, 2), 0.37)
    assert np.allclose(downsample_half(const), 0.37)
    assert np.allclose(upsample_double(const), 0.37)
    block = np.array([[1.0, 3.0], [5.0, 7.0]])[:, :, None]
    assert downsample_half(block)[0, 0, 0] == pytest.approx(4.0)
    assert np.allclose(downsample_half(upsample_double(const)), const)


def test_downsample_odd_rejected(rng):
    with pytest.raises(ShapeMismatch):
        downsample_half(rng.uniform(0, 1, (3, 4, 1)))


def test_upsample_seam_symmetry():
    out = upsample_double(row([2.0, 10.0]))[0, :, 0]
    # widths double; the two seam-adjacent outputs blend symmetrically
    assert out[0] == pytest.approx(0.75 * 2.0 + 0.25 * 10.0)
    assert out[3] == pytest.approx(0.75 * 10.0 + 0.25 * 2.0)
    assert out[0] + out[3] == pytest.approx(12.0)


def test_diff_constant_zero():
    const = np.full((5, 8), 1.23)
    for op in (grad_x_wrap, grad_y, dxx_wrap, dxy_wrap, dyy):
        assert np.allclose(op(const), 0.0)


def test_dxx_sinusoid_oracle():
    cols = 64
    x = np.arange(cols)
    t = np.broadcast_to(np.sin(2 * np.pi * x / cols), (4, cols)).copy()
    expected = -(2 * np.pi / cols) ** 2 * np.sin(2 * np.pi * x / cols)
    err = np.abs(dxx_wrap(t)[0] - expected).max()
    assert err < (2 * np.pi / cols) ** 2 * 1e-2


def test_dyy_ramp_interior():
    t = np.broadcast_to(np.arange(6.0)[:, None], (6, 4)).copy()
    out = dyy(t)
    assert np.allclose(out[1:-1], 0.0)


def test_diff_linearity(rng):
    t = rng.standard_normal((6, 10))
    for op in (grad_x_wrap, grad_y, dxx_wrap, dxy_wrap, dyy):
        assert np.allclose(op(3.7 * t), 3.7 * op(t), atol=1e-12)


def test_dxy_equals_dyx(rng):
    t = rng.standard_normal((6, 10))
    assert np.allclose(dxy_wrap(t), grad_x_wrap(grad_y(t)), atol=1e-12)


def test_seam_equivariance_all_ops(rng):
    """Circularly shifting input columns shifts every output exactly."""
    x = rng.standard_normal((6, 8, 2))
    kern = Kernel(rng.standard_normal((3, 3, 2, 2)))
    single = x[:, :, 0]
    cases = [
        (lambda v: conv2d_wrap(v, kern), x, 1),
        (lambda v: wrap_pad(v, 2)[:, 2:-2], x, 1),
        (lambda v: upsample_double(v), x, 2),
        (lambda v: grad_x_wrap(v), single, 1),
        (lambda v: dxx_wrap(v), single, 1),
        (lambda v: dxy_wrap(v), single, 1),
        (lambda v: dyy(v), single, 1),
        (lambda v: grad_y(v), single, 1),
    ]
    for fn, data, out_factor in cases:
        base = fn(data)
        for s in (1, 5):
            shifted = fn(np.roll(data, s, axis=1))
            assert np.array_equal(shifted, np.roll(base, s * out_factor, axis=1))


def test_downsample_shift_equivariance(rng):
    x = rng.standard_normal((6, 8, 2))
    base = downsample_half(x)
    shifted = downsample_half(np.roll(x, 2, axis=1))
    assert np.array_equal(shifted, np.roll(base, 1, axis=1))


def test_diff_backward_adjoints(rng):
    """Linear ops: backward must be the exact adjoint of forward."""
    pairs = [
        (ops.grad_x_wrap, ops.grad_x_wrap_backward, {}),
        (lambda t: ops.grad_x_wrap(t, wrap=False),
         lambda g: ops.grad_x_wrap_backward(g, wrap=False), {}),
        (ops.grad_y, ops.grad_y_backward, {}),
        (ops.dxx_wrap, ops.dxx_wrap_backward, {}),
        (lambda t: ops.dxx_wrap(t, wrap=False),
         lambda g: ops.dxx_wrap_backward(g, wrap=False), {}),
        (ops.dyy, ops.dyy_backward, {}),
        (ops.dxy_wrap, ops.dxy_wrap_backward, {}),
    ]
    for fwd, bwd, _ in pairs:
        t = rng.standard_normal((5, 7))
        g = rng.standard_normal((5, 7))
        lhs = float(np.sum(fwd(t) * g))      # <A t, g>
        rhs = float(np.sum(t * bwd(g)))      # <t, A^T g>
        assert lhs == pytest.approx(rhs, abs=1e-12)


def test_down_up_backward(rng):
    x = rng.standard_normal((4, 6, 2))
    g = rng.standard_normal((2, 3, 2))
    lhs = float(np.sum(downsample_half(x) * g))
    rhs = float(np.sum(x * downsample_half_backward(g)))
    assert lhs == pytest.approx(rhs, abs=1e-12)
    g2 = rng.standard_normal((8, 12, 2))
    lhs = float(np.sum(upsample_double(x) * g2))
    rhs = float(np.sum(x * ops.upsample_double_backward(g2)))
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_sampler_snaps_near_integer(rng):
    img = rng.uniform(0, 1, (4, 6, 2))
    out, _ = bilinear_sample_wrap(img, np.array([[2.0 + 1e-12]]),
                                  np.array([[3.0 - 1e-12]]))
    assert np.array_equal(out[0, 0], img[3, 2])
