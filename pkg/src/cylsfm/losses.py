"""Photometric, smoothness and explainability losses for view synthesis.

All losses are means over valid pixels so their weights are resolution
independent.  ``total_loss`` stacks them across a multi-scale pyramid and can
return analytic gradients for every variable group: the disparity map at each
scale, the six pose numbers per source, and the per-source mask logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CylCamera
from .errors import EmptyMask, ShapeMismatch
from .ops import (downsample_half, downsample_half_backward, dxx_wrap,
                  dxx_wrap_backward, dxy_wrap, dxy_wrap_backward, dyy,
                  dyy_backward, grad_x_wrap, grad_y)
from .synthesis import Pose6, sigmoid, synthesize_view, synthesize_view_backward


@dataclass
class LossConfig:
    lambda_s: float = 2.0          # second-order smooth weight
    lambda_e: float = 0.0          # explainability weight (0 disables the mask)
    lambda_m: float = 0.2          # image-aware smooth weight
    num_scales: int = 4
    smooth_mode: str = "second_order"   # or "image_aware"
    wrap: bool = True

    def __post_init__(self):
        if min(self.lambda_s, self.lambda_e, self.lambda_m) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.num_scales < 1:
            raise ValueError("need at least one scale")
        if self.smooth_mode not in ("second_order", "image_aware"):
            raise ValueError(f"unknown smooth_mode {self.smooth_mode!r}")


def photometric_loss(i_proj, i_target, e_weights, valid) -> float:
    """Mean of E * |i_proj - i_target| over valid pixels and channels."""
    diff = np.asarray(i_proj, dtype=np.float64) - np.asarray(i_target, dtype=np.float64)
    valid = np.asarray(valid, dtype=np.float64)
    e_weights = np.asarray(e_weights, dtype=np.float64)
    if diff.shape[:2] != valid.shape or diff.shape[:2] != e_weights.shape:
        raise ShapeMismatch("photometric inputs disagree spatially")
    n_valid = valid.sum()
    if n_valid == 0:
        raise EmptyMask("no valid pixel in the photometric loss")
    w = (e_weights * valid)[..., None]
    return float((w * np.abs(diff)).sum() / (n_valid * diff.shape[2]))


def photometric_loss_backward(i_proj, i_target, e_weights, valid):
    """Gradients w.r.t. i_proj and e_weights (targets are constants)."""
    diff = np.asarray(i_proj, dtype=np.float64) - np.asarray(i_target, dtype=np.float64)
    valid = np.asarray(valid, dtype=np.float64)
    e_weights = np.asarray(e_weights, dtype=np.float64)
    n_valid = valid.sum()
    if n_valid == 0:
        raise EmptyMask("no valid pixel in the photometric loss")
    scale = 1.0 / (n_valid * diff.shape[2])
    grad_proj = np.sign(diff) * (e_weights * valid)[..., None] * scale
    grad_e = np.abs(diff).sum(axis=-1) * valid * scale
    return grad_proj, grad_e


def _second_diffs(disp, wrap):
    return dxx_wrap(disp, wrap=wrap), dxy_wrap(disp, wrap=wrap), dyy(disp)


def smooth_loss_second_order(disp, wrap: bool = True) -> float:
    """Mean |dxx| + |dxy| + |dyx| + |dyy| of the disparity map.

    The two mixed terms are identical (the difference operators commute), so
    the cross term is counted twice.
    """
    disp = np.asarray(disp, dtype=np.float64)
    xx, xy, yy = _second_diffs(disp, wrap)
    return float(np.mean(np.abs(xx) + 2.0 * np.abs(xy) + np.abs(yy)))


def smooth_loss_second_order_backward(disp, wrap: bool = True):
    disp = np.asarray(disp, dtype=np.float64)
    xx, xy, yy = _second_diffs(disp, wrap)
    n = disp.size
    grad = dxx_wrap_backward(np.sign(xx) / n, wrap=wrap)
    grad += dxy_wrap_backward(2.0 * np.sign(xy) / n, wrap=wrap)
    grad += dyy_backward(np.sign(yy) / n)
    return grad


def _edge_weights(image, wrap):
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    g = np.abs(grad_x_wrap(img, wrap=wrap)).mean(axis=-1) \
        + np.abs(grad_y(img)).mean(axis=-1)
    return np.exp(-g)


def smooth_loss_image_aware(disp, image, wrap: bool = True) -> float:
    """Second-difference penalty attenuated by exp(-|image gradient|)."""
    disp = np.asarray(disp, dtype=np.float64)
    if np.asarray(image).shape[:2] != disp.shape:
        raise ShapeMismatch("image and disparity disagree spatially")
    w = _edge_weights(image, wrap)
    xx, xy, yy = _second_diffs(disp, wrap)
    return float(np.mean(w * (np.abs(xx) + np.abs(xy) + np.abs(yy))))


def smooth_loss_image_aware_backward(disp, image, wrap: bool = True):
    disp = np.asarray(disp, dtype=np.float64)
    w = _edge_weights(image, wrap)
    xx, xy, yy = _second_diffs(disp, wrap)
    n = disp.size
    grad = dxx_wrap_backward(w * np.sign(xx) / n, wrap=wrap)
    grad += dxy_wrap_backward(w * np.sign(xy) / n, wrap=wrap)
    grad += dyy_backward(w * np.sign(yy) / n)
    return grad


def mask_weights(e_logits) -> np.ndarray:
    """Probability of the 'explained' channel (channel 0) per pixel."""
    e = np.asarray(e_logits, dtype=np.float64)
    if e.ndim != 3 or e.shape[2] != 2:
        raise ShapeMismatch("mask logits must have two channels")
    return sigmoid(e[:, :, 0] - e[:, :, 1])


def mask_weights_backward(e_logits, grad_w) -> np.ndarray:
    p = mask_weights(e_logits)
    g = grad_w * p * (1.0 - p)
    return np.stack([g, -g], axis=-1)


def explainability_loss(e_logits) -> float:
    """Cross-entropy of the mask softmax against the all-explained label."""
    e = np.asarray(e_logits, dtype=np.float64)
    if e.ndim != 3 or e.shape[2] != 2:
        raise ShapeMismatch("mask logits must have two channels")
    z = e[:, :, 1] - e[:, :, 0]
    # -log sigmoid(-z) = softplus(z), computed stably
    return float(np.mean(np.logaddexp(0.0, z)))


def explainability_loss_backward(e_logits) -> np.ndarray:
    e = np.asarray(e_logits, dtype=np.float64)
    p = sigmoid(e[:, :, 0] - e[:, :, 1])
    g = (p - 1.0) / p.size
    return np.stack([g, -g], axis=-1)


@dataclass
class TotalLoss:
    total: float
    pixel: float
    smooth: float
    exp: float

    def breakdown(self) -> dict:
        return {"total": self.total, "pixel": self.pixel,
                "smooth": self.smooth, "exp": self.exp}


@dataclass
class TotalLossGrads:
    disparities: list          # one (H_s, W_s) array per scale
    poses: list                # one (6,) array per source
    mask_logits: list | None   # one (H, W, 2) array per source, or None


def _scaled_camera(cam: CylCamera, s: int) -> CylCamera:
    return CylCamera(cam.width >> s, cam.height >> s, cam.h_max,
                     cam.theta0, cam.span)


def _pyramid(img, levels):
    out = [np.asarray(img, dtype=np.float64)]
    for _ in range(levels - 1):
        out.append(downsample_half(out[-1]))
    return out


def total_loss(target, sources, disparities, poses, mask_logits,
               cam: CylCamera, cfg: LossConfig, want_grads: bool = False):
    """Multi-scale view-synthesis objective.

    ``disparities`` is a pyramid with cfg.num_scales levels, scale 0 finest;
    ``poses``/``mask_logits`` hold one entry per source image (mask logits may
    be None when cfg.lambda_e == 0).  Returns a TotalLoss, or a
    (TotalLoss, TotalLossGrads) pair when ``want_grads``.
    """
    ns = cfg.num_scales
    if len(disparities) != ns:
        raise ShapeMismatch(f"expected {ns} pyramid levels, got {len(disparities)}")
    if len(sources) != len(poses):
        raise ShapeMismatch("need one pose per source")
    use_mask = cfg.lambda_e > 0
    if use_mask and (mask_logits is None or len(mask_logits) != len(sources)):
        raise ShapeMismatch("need one mask logit tensor per source")
    rows, cols = np.asarray(target).shape[:2]
    if rows % (1 << (ns - 1)) or cols % (1 << (ns - 1)):
        raise ShapeMismatch("image dimensions must be divisible at every scale")

    tgt_pyr = _pyramid(target, ns)
    src_pyrs = [_pyramid(s, ns) for s in sources]
    mask_pyrs = [_pyramid(m, ns) for m in mask_logits] if use_mask else None

    pixel_sum = 0.0
    smooth_sum = 0.0
    exp_sum = 0.0
    grads = TotalLossGrads(
        disparities=[np.zeros_like(np.asarray(d, dtype=np.float64)) for d in disparities],
        poses=[np.zeros(6) for _ in sources],
        mask_logits=[np.zeros((rows, cols, 2)) for _ in sources] if use_mask else None,
    ) if want_grads else None

    for s in range(ns):
        cam_s = _scaled_camera(cam, s)
        disp = np.asarray(disparities[s], dtype=np.float64)
        if disp.shape != (cam_s.height, cam_s.width):
            raise ShapeMismatch(f"pyramid level {s} has shape {disp.shape}")
        depth = 1.0 / disp
        w_smooth = (cfg.lambda_s if cfg.smooth_mode == "second_order"
                    else cfg.lambda_m) / (1 << s)
        d_mask_scaled = []

        for k, src_pyr in enumerate(src_pyrs):
            pose = poses[k] if isinstance(poses[k], Pose6) else Pose6.from_vector(poses[k])
            res = synthesize_view(src_pyr[s], depth, pose, cam_s, wrap=cfg.wrap)
            if use_mask:
                ml = mask_pyrs[k][s]
                ew = mask_weights(ml)
            else:
                ml = None
                ew = np.ones_like(disp)
            pixel_sum += photometric_loss(res.i_proj, tgt_pyr[s], ew, res.valid)
            if use_mask:
                exp_sum += cfg.lambda_e * explainability_loss(ml)

            if want_grads:
                g_proj, g_e = photometric_loss_backward(res.i_proj, tgt_pyr[s],
                                                        ew, res.valid)
                g_depth, g_pose = synthesize_view_backward(res, g_proj)
                grads.disparities[s] += -g_depth * depth * depth
                grads.poses[k] += g_pose
                if use_mask:
                    g_ml = mask_weights_backward(ml, g_e)
                    g_ml += cfg.lambda_e * explainability_loss_backward(ml)
                    d_mask_scaled.append(g_ml)

        if cfg.smooth_mode == "second_order":
            sm = smooth_loss_second_order(disp, wrap=cfg.wrap)
        else:
            sm = smooth_loss_image_aware(disp, tgt_pyr[s], wrap=cfg.wrap)
        smooth_sum += w_smooth * sm

        if want_grads:
            if cfg.smooth_mode == "second_order":
                g_sm = smooth_loss_second_order_backward(disp, wrap=cfg.wrap)
            else:
                g_sm = smooth_loss_image_aware_backward(disp, tgt_pyr[s],
                                                        wrap=cfg.wrap)
            grads.disparities[s] += w_smooth * g_sm
            if use_mask:
                for k, g_ml in enumerate(d_mask_scaled):
                    for _ in range(s):  # undo the mean-pool chain
                        g_ml = downsample_half_backward(g_ml)
                    grads.mask_logits[k] += g_ml

    result = TotalLoss(pixel_sum + smooth_sum + exp_sum,
                       pixel_sum, smooth_sum, exp_sum)
    if want_grads:
        return result, grads
    return result
