"""Differentiable panoramic view synthesis.

A target pixel is unprojected onto the cylinder with its predicted depth,
rigidly transformed into the source frame, re-projected, and the source image
is bilinearly sampled at the result.  The whole chain has a hand-derived
backward pass w.r.t. the depth map and the six pose parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .camera import CylCamera, EPS_RADIAL
from .errors import ShapeMismatch
from .ops import bilinear_sample_wrap, bilinear_sample_wrap_backward


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class Pose6:
    """Rigid motion as translation (tx, ty, tz) plus rotation (ax, ay, az).

    The rotation matrix is Rz(az) @ Ry(ay) @ Rx(ax); points map by
    X_source = R @ X_target + t.
    """

    t: np.ndarray = field(default_factory=lambda: np.zeros(3))
    r: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)
        self.r = np.asarray(self.r, dtype=np.float64).reshape(3)

    @staticmethod
    def from_vector(v) -> "Pose6":
        v = np.asarray(v, dtype=np.float64).reshape(6)
        return Pose6(v[:3].copy(), v[3:].copy())

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.t, self.r])

    @staticmethod
    def identity() -> "Pose6":
        return Pose6()


def _axis_rotations(r):
    ax, ay, az = r
    ca, sa = math.cos(ax), math.sin(ax)
    cb, sb = math.cos(ay), math.sin(ay)
    cc, sc = math.cos(az), math.sin(az)
    rx = np.array([[1.0, 0.0, 0.0], [0.0, ca, -sa], [0.0, sa, ca]])
    ry = np.array([[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]])
    rz = np.array([[cc, -sc, 0.0], [sc, cc, 0.0], [0.0, 0.0, 1.0]])
    drx = np.array([[0.0, 0.0, 0.0], [0.0, -sa, -ca], [0.0, ca, -sa]])
    dry = np.array([[-sb, 0.0, cb], [0.0, 0.0, 0.0], [-cb, 0.0, -sb]])
    drz = np.array([[-sc, -cc, 0.0], [cc, -sc, 0.0], [0.0, 0.0, 0.0]])
    return rx, ry, rz, drx, dry, drz


def pose_to_transform(pose: Pose6):
    """Pose -> (R, t) with R = Rz @ Ry @ Rx."""
    rx, ry, rz, _, _, _ = _axis_rotations(pose.r)
    return rz @ ry @ rx, pose.t.copy()


def pose_to_transform_backward(pose: Pose6, grad_r_mat, grad_t) -> np.ndarray:
    """Chain upstream gradients on (R, t) back to the six pose numbers."""
    rx, ry, rz, drx, dry, drz = _axis_rotations(pose.r)
    g = np.empty(6)
    g[:3] = np.asarray(grad_t, dtype=np.float64)
    g[3] = float(np.sum(grad_r_mat * (rz @ ry @ drx)))
    g[4] = float(np.sum(grad_r_mat * (rz @ dry @ rx)))
    g[5] = float(np.sum(grad_r_mat * (drz @ ry @ rx)))
    return g


@dataclass
class DepthState:
    """Unconstrained per-pixel logits mapped to bounded disparity/depth.

    disparity = 1/d_max + (1/d_min - 1/d_max) * sigmoid(logits), so the depth
    1/disparity always stays inside (d_min, d_max).
    """

    logits: np.ndarray
    d_min: float = 0.1
    d_max: float = 100.0

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=np.float64)
        if not (0 < self.d_min < self.d_max):
            raise ValueError("need 0 < d_min < d_max")

    def disparity(self) -> np.ndarray:
        return disparity_from_logits(self.logits, self.d_min, self.d_max)

    def depth(self) -> np.ndarray:
        return 1.0 / self.disparity()


def disparity_from_logits(logits, d_min=0.1, d_max=100.0):
    lo, hi = 1.0 / d_max, 1.0 / d_min
    return lo + (hi - lo) * sigmoid(logits)


def disparity_from_logits_backward(logits, grad_disp, d_min=0.1, d_max=100.0):
    s = sigmoid(logits)
    return grad_disp * (1.0 / d_min - 1.0 / d_max) * s * (1.0 - s)


@dataclass
class SynthResult:
    """Synthesized view plus its validity mask and sampling coordinates."""

    i_proj: np.ndarray
    valid: np.ndarray
    coords_i: np.ndarray
    coords_j: np.ndarray
    cache: dict = field(repr=False, default_factory=dict)


def synthesize_view(i_source, depth, pose: Pose6, cam: CylCamera,
                    wrap: bool | None = None) -> SynthResult:
    """Warp ``i_source`` into the target frame given target depth and pose.

    ``depth`` holds radial depth per target pixel, shape (H, W).  Pixels whose
    transformed point falls onto the cylinder axis or outside the image are
    marked invalid and set to zero.  ``wrap`` defaults to the camera's own
    wrapping behavior; pass False for the zero-padding ablation.
    """
    img = np.asarray(i_source, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if depth.shape != img.shape[:2]:
        raise ShapeMismatch(f"depth {depth.shape} vs image {img.shape[:2]}")
    if img.shape[0] != cam.height or img.shape[1] != cam.width:
        raise ShapeMismatch("camera dimensions do not match the image")
    if wrap is None:
        wrap = cam.wraps

    theta, h = cam.grids()
    sin_t, cos_t = np.sin(theta), np.cos(theta)
    xt = np.stack([depth * sin_t, depth * h, depth * cos_t], axis=-1)

    rot, t = pose_to_transform(pose)
    xs = xt @ rot.T + t

    x, y, z = xs[..., 0], xs[..., 1], xs[..., 2]
    r = np.hypot(x, z)
    ok = r > EPS_RADIAL
    r_safe = np.where(ok, r, 1.0)
    theta_s = np.arctan2(x, z)
    h_s = y / r_safe

    ci = cam.col_of_theta(theta_s)
    cj = cam.row_of_h(h_s)
    samples, samp_valid = bilinear_sample_wrap(img, ci, cj, wrap=wrap)
    valid = samp_valid * ok
    i_proj = samples * valid[..., None]

    cache = dict(img=img, depth=depth, pose=pose, cam=cam, wrap=wrap,
                 sin_t=sin_t, cos_t=cos_t, h=h, xt=xt, rot=rot,
                 x=x, y=y, z=z, r_safe=r_safe, ok=ok, ci=ci, cj=cj, valid=valid)
    return SynthResult(i_proj, valid, ci, cj, cache)


def synthesize_view_backward(res: SynthResult, grad_iproj):
    """Gradients of the synthesized image w.r.t. depth and the pose vector."""
    c = res.cache
    cam: CylCamera = c["cam"]
    g = np.asarray(grad_iproj, dtype=np.float64) * c["valid"][..., None]

    _, gi, gj = bilinear_sample_wrap_backward(c["img"], c["ci"], c["cj"], g,
                                              wrap=c["wrap"])
    g_theta = gi * (cam.width / cam.span)
    g_h = gj * (cam.height / (2.0 * cam.h_max))

    x, y, z, r = c["x"], c["y"], c["z"], c["r_safe"]
    ok = c["ok"]
    r2 = r * r
    r3 = r2 * r
    gx = np.where(ok, g_theta * z / r2 - g_h * y * x / r3, 0.0)
    gy = np.where(ok, g_h / r, 0.0)
    gz = np.where(ok, -g_theta * x / r2 - g_h * y * z / r3, 0.0)
    g_xs = np.stack([gx, gy, gz], axis=-1)

    rot = c["rot"]
    g_xt = g_xs @ rot
    grad_rot = np.einsum("rci,rcj->ij", g_xs, c["xt"])
    grad_t = g_xs.sum(axis=(0, 1))

    grad_depth = (g_xt[..., 0] * c["sin_t"] + g_xt[..., 1] * c["h"]
                  + g_xt[..., 2] * c["cos_t"])
    grad_pose = pose_to_transform_backward(c["pose"], grad_rot, grad_t)
    return grad_depth, grad_pose
