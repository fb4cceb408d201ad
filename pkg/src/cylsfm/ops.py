"""Dense array primitives with horizontal wrap semantics.

All tensors are float64 numpy arrays laid out (rows, cols, channels); images,
depth maps and feature maps share this layout.  Every operation has an
analytic backward pass that is checked against central finite differences in
the test suite.  Horizontal boundaries wrap across the panorama seam when
``wrap=True``; vertical boundaries are zero-padded (convolution) or
edge-replicated (differences, sampling).  All loops run in a fixed order so
results are bit-stable across runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BadPad, ShapeMismatch

# Coordinates this close to an integer are snapped onto it by the bilinear
# sampler, so exact-reproduction identities survive projection roundtrips.
SNAP_EPS = 1e-9


def _as3d(t) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 2:
        return t[:, :, None]
    if t.ndim != 3:
        raise ShapeMismatch(f"expected 2-D or 3-D tensor, got shape {t.shape}")
    return t


@dataclass
class Kernel:
    """Convolution weights of shape (k_h, k_w, in_channels, out_channels)."""

    weights: np.ndarray
    bias: np.ndarray = field(default=None)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 4:
            raise ShapeMismatch("kernel weights must be 4-D")
        kh, kw, _, co = self.weights.shape
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeMismatch("kernel sides must be odd so padding preserves size")
        if self.bias is None:
            self.bias = np.zeros(co)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.bias.shape != (co,):
            raise ShapeMismatch("bias must have one entry per output channel")


def wrap_pad(t, k: int) -> np.ndarray:
    """Pad k columns on each side by copying columns from the opposite edge.

    Row [a, b, c] with k=1 becomes [c, a, b, c, a].
    """
    t = np.asarray(t, dtype=np.float64)
    cols = t.shape[1]
    if k < 0 or k > cols:
        raise BadPad(f"wrap padding {k} exceeds width {cols}")
    if k == 0:
        return t.copy()
    return np.concatenate([t[:, cols - k:], t, t[:, :k]], axis=1)


def _pad_for_conv(x, ph, pw, wrap):
    if wrap:
        if pw > x.shape[1]:
            raise BadPad(f"kernel wider than twice the image width ({x.shape[1]})")
        x = wrap_pad(x, pw)
    else:
        x = np.pad(x, ((0, 0), (pw, pw), (0, 0)))
    if ph:
        x = np.pad(x, ((ph, ph), (0, 0), (0, 0)))
    return x


def conv2d_wrap(x, kern: Kernel, stride: int = 1, wrap: bool = True) -> np.ndarray:
    """2-D cross-correlation with horizontal wrap padding, vertical zero padding.

    Output spatial size is (R/stride, C/stride); both dimensions must be
    divisible by the stride.
    """
    x = _as3d(x)
    kh, kw, ci, oc = kern.weights.shape
    if x.shape[2] != ci:
        raise ShapeMismatch(f"input has {x.shape[2]} channels, kernel expects {ci}")
    if stride not in (1, 2):
        raise ShapeMismatch("stride must be 1 or 2")
    rows, cols, _ = x.shape
    if rows % stride or cols % stride:
        raise ShapeMismatch("spatial dimensions must be divisible by the stride")
    xp = _pad_for_conv(x, kh // 2, kw // 2, wrap)
    out_r, out_c = rows // stride, cols // stride
    out = np.empty((out_r, out_c, oc))
    out[:] = kern.bias
    for a in range(kh):
        for b in range(kw):
            window = xp[a:a + out_r * stride:stride, b:b + out_c * stride:stride]
            out += window @ kern.weights[a, b]
    return out


def conv2d_wrap_backward(x, kern: Kernel, grad_out, stride: int = 1, wrap: bool = True):
    """Gradients of conv2d_wrap w.r.t. the input, weights, and bias."""
    x = _as3d(x)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    kh, kw, ci, oc = kern.weights.shape
    rows, cols, _ = x.shape
    ph, pw = kh // 2, kw // 2
    xp = _pad_for_conv(x, ph, pw, wrap)
    out_r, out_c = rows // stride, cols // stride
    if grad_out.shape != (out_r, out_c, oc):
        raise ShapeMismatch("upstream gradient shape does not match the output")

    grad_w = np.empty_like(kern.weights)
    grad_xp = np.zeros_like(xp)
    for a in range(kh):
        for b in range(kw):
            window = xp[a:a + out_r * stride:stride, b:b + out_c * stride:stride]
            grad_w[a, b] = np.einsum("rci,rco->io", window, grad_out)
            grad_xp[a:a + out_r * stride:stride, b:b + out_c * stride:stride] += \
                grad_out @ kern.weights[a, b].T
    grad_b = grad_out.sum(axis=(0, 1))

    core = grad_xp[ph:ph + rows] if ph else grad_xp
    if wrap and pw:
        grad_x = core[:, pw:pw + cols].copy()
        grad_x[:, cols - pw:] += core[:, :pw]
        grad_x[:, :pw] += core[:, cols + pw:]
    elif pw:
        grad_x = core[:, pw:pw + cols].copy()
    else:
        grad_x = core.copy()
    return grad_x, grad_w, grad_b


def _sample_indices(img_shape, ci, cj, wrap):
    """Resolve bilinear corners, weights and validity for sample coordinates."""
    rows, cols = img_shape
    ci = np.asarray(ci, dtype=np.float64)
    cj = np.asarray(cj, dtype=np.float64)

    ri = np.round(ci)
    ci = np.where(np.abs(ci - ri) < SNAP_EPS, ri, ci)
    rj = np.round(cj)
    cj = np.where(np.abs(cj - rj) < SNAP_EPS, rj, cj)

    valid = (cj >= -0.5) & (cj <= rows - 0.5)
    if wrap:
        ci_eff = ci % cols
    else:
        valid = valid & (ci >= -0.5) & (ci <= cols - 0.5)
        ci_eff = np.clip(ci, 0.0, cols - 1.0)
    cj_eff = np.clip(cj, 0.0, rows - 1.0)

    i0 = np.floor(ci_eff).astype(np.int64)
    fx = ci_eff - i0
    if wrap:
        i0 %= cols
        i1 = (i0 + 1) % cols
    else:
        i0 = np.clip(i0, 0, cols - 1)
        i1 = np.minimum(i0 + 1, cols - 1)
    j0 = np.floor(cj_eff).astype(np.int64)
    j0 = np.clip(j0, 0, rows - 1)
    fy = cj_eff - j0
    j1 = np.minimum(j0 + 1, rows - 1)
    # True where the coordinate sits inside the interpolable interior, i.e.
    # where the clamp above is inactive and the derivative w.r.t. the
    # coordinate is the plain bilinear one.
    interior_x = wrap | ((ci > 0.0) & (ci < cols - 1.0))
    interior_y = (cj > 0.0) & (cj < rows - 1.0)
    return i0, i1, j0, j1, fx, fy, valid, interior_x, interior_y


def bilinear_sample_wrap(img, ci, cj, wrap: bool = True):
    """Sample img at per-pixel coordinates (ci, cj) with bilinear weights.

    Horizontal coordinates wrap modulo the width when ``wrap``; vertical
    coordinates within half a pixel of the border are edge-clamped, and
    anything further out is marked invalid (sample 0, valid 0).  Integer
    coordinates return the exact pixel.
    """
    img = _as3d(img)
    rows, cols, _ = img.shape
    i0, i1, j0, j1, fx, fy, valid, _, _ = _sample_indices((rows, cols), ci, cj, wrap)
    w00 = (1 - fx) * (1 - fy)
    w10 = fx * (1 - fy)
    w01 = (1 - fx) * fy
    w11 = fx * fy
    out = (w00[..., None] * img[j0, i0] + w10[..., None] * img[j0, i1]
           + w01[..., None] * img[j1, i0] + w11[..., None] * img[j1, i1])
    out *= valid[..., None]
    return out, valid.astype(np.float64)


def bilinear_sample_wrap_backward(img, ci, cj, grad_out, wrap: bool = True):
    """Gradients of bilinear_sample_wrap w.r.t. the image and the coordinates.

    The coordinate gradient is the piecewise-bilinear derivative; it is zero
    on invalid pixels and on the clamp plateau at the vertical border.
    """
    img = _as3d(img)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    rows, cols, ch = img.shape
    i0, i1, j0, j1, fx, fy, valid, in_x, in_y = _sample_indices((rows, cols), ci, cj, wrap)
    g = grad_out * valid[..., None]

    grad_img = np.zeros_like(img)
    flat = grad_img.reshape(-1, ch)
    idx00 = (j0 * cols + i0).ravel()
    idx10 = (j0 * cols + i1).ravel()
    idx01 = (j1 * cols + i0).ravel()
    idx11 = (j1 * cols + i1).ravel()
    gf = g.reshape(-1, ch)
    np.add.at(flat, idx00, gf * ((1 - fx) * (1 - fy)).reshape(-1, 1))
    np.add.at(flat, idx10, gf * (fx * (1 - fy)).reshape(-1, 1))
    np.add.at(flat, idx01, gf * ((1 - fx) * fy).reshape(-1, 1))
    np.add.at(flat, idx11, gf * (fx * fy).reshape(-1, 1))

    p00, p10, p01, p11 = img[j0, i0], img[j0, i1], img[j1, i0], img[j1, i1]
    ds_di = (p10 - p00) * (1 - fy)[..., None] + (p11 - p01) * fy[..., None]
    ds_dj = (p01 - p00) * (1 - fx)[..., None] + (p11 - p10) * fx[..., None]
    grad_i = (g * ds_di).sum(axis=-1) * in_x
    grad_j = (g * ds_dj).sum(axis=-1) * in_y
    return grad_img, grad_i, grad_j


def downsample_half(t) -> np.ndarray:
    """2x2 mean pooling; both spatial dimensions must be even."""
    t = _as3d(t)
    rows, cols, ch = t.shape
    if rows % 2 or cols % 2:
        raise ShapeMismatch(f"cannot halve odd dimensions {rows}x{cols}")
    return t.reshape(rows // 2, 2, cols // 2, 2, ch).mean(axis=(1, 3))


def downsample_half_backward(grad_out) -> np.ndarray:
    g = _as3d(grad_out)
    rows, cols, ch = g.shape
    out = np.empty((rows * 2, cols * 2, ch))
    out.reshape(rows, 2, cols, 2, ch)[:] = g[:, None, :, None, :] * 0.25
    return out


def _upsample_coords(rows, cols):
    ci = (np.arange(2 * cols) + 0.5) / 2.0 - 0.5
    cj = (np.arange(2 * rows) + 0.5) / 2.0 - 0.5
    return np.broadcast_to(ci, (2 * rows, 2 * cols)), \
        np.broadcast_to(cj[:, None], (2 * rows, 2 * cols))


def upsample_double(t, wrap: bool = True) -> np.ndarray:
    """Bilinear 2x upsampling, wrap-aware across the horizontal seam."""
    t = _as3d(t)
    rows, cols, _ = t.shape
    ci, cj = _upsample_coords(rows, cols)
    out, _ = bilinear_sample_wrap(t, ci, cj, wrap=wrap)
    return out


def upsample_double_backward(grad_out, wrap: bool = True) -> np.ndarray:
    g = _as3d(grad_out)
    rows, cols = g.shape[0] // 2, g.shape[1] // 2
    ci, cj = _upsample_coords(rows, cols)
    ref = np.zeros((rows, cols, g.shape[2]))
    grad_in, _, _ = bilinear_sample_wrap_backward(ref, ci, cj, g, wrap=wrap)
    return grad_in


def _shift_cols(t, s):
    return np.roll(t, -s, axis=1)


def _shift_rows_replicate(t, s):
    # s=+1 pulls the next row down, replicating the last; s=-1 mirrors at the top.
    if s == 1:
        return np.concatenate([t[1:], t[-1:]], axis=0)
    return np.concatenate([t[:1], t[:-1]], axis=0)


def grad_x_wrap(t, wrap: bool = True) -> np.ndarray:
    """Forward difference along columns, circular across the seam."""
    t = np.asarray(t, dtype=np.float64)
    if wrap:
        return _shift_cols(t, 1) - t
    out = np.empty_like(t)
    out[:, :-1] = t[:, 1:] - t[:, :-1]
    out[:, -1] = 0.0
    return out


def grad_x_wrap_backward(g, wrap: bool = True) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    if wrap:
        return _shift_cols(g, -1) - g
    out = -g.copy()
    out[:, -1] = 0.0
    out[:, 1:] += g[:, :-1]
    return out


def grad_y(t) -> np.ndarray:
    """Forward difference along rows; the bottom row replicates (zero diff)."""
    t = np.asarray(t, dtype=np.float64)
    return _shift_rows_replicate(t, 1) - t


def grad_y_backward(g) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    out = -g.copy()
    out[1:] += g[:-1]
    out[-1] += g[-1]
    return out


def dxx_wrap(t, wrap: bool = True) -> np.ndarray:
    """Second difference along columns (circular when wrapping)."""
    t = np.asarray(t, dtype=np.float64)
    if wrap:
        return _shift_cols(t, 1) - 2.0 * t + _shift_cols(t, -1)
    left = np.concatenate([t[:, :1], t[:, :-1]], axis=1)
    right = np.concatenate([t[:, 1:], t[:, -1:]], axis=1)
    return right - 2.0 * t + left


def dxx_wrap_backward(g, wrap: bool = True) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    if wrap:
        return _shift_cols(g, -1) - 2.0 * g + _shift_cols(g, 1)
    out = -2.0 * g
    out[:, :-1] += g[:, 1:]
    out[:, 0] += g[:, 0]
    out[:, 1:] += g[:, :-1]
    out[:, -1] += g[:, -1]
    return out


def dyy(t) -> np.ndarray:
    """Second difference along rows with edge replication at top and bottom."""
    t = np.asarray(t, dtype=np.float64)
    return _shift_rows_replicate(t, 1) - 2.0 * t + _shift_rows_replicate(t, -1)


def dyy_backward(g) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    out = -2.0 * g
    out[:-1] += g[1:]
    out[0] += g[0]
    out[1:] += g[:-1]
    out[-1] += g[-1]
    return out


def dxy_wrap(t, wrap: bool = True) -> np.ndarray:
    """Mixed difference; the row and column operators commute, so dyx = dxy."""
    return grad_y(grad_x_wrap(t, wrap=wrap))


def dxy_wrap_backward(g, wrap: bool = True) -> np.ndarray:
    return grad_x_wrap_backward(grad_y_backward(g), wrap=wrap)
