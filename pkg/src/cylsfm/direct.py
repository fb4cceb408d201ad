"""Direct per-snippet optimization of depth and pose.

Instead of training a network, this estimator descends the view-synthesis
loss directly on one snippet's depth logits, pose vectors and (optionally)
mask logits, coarse to fine: optimize at a low resolution, upsample the
logits, refine.  It exercises the same loss and gradients as network
training but converges on a single snippet in seconds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import CylCamera
from .errors import Diverged
from .losses import LossConfig, total_loss
from .ops import downsample_half, downsample_half_backward, upsample_double
from .optim import Adam
from .snippet import Snippet
from .synthesis import (DepthState, Pose6, disparity_from_logits,
                        disparity_from_logits_backward)


@dataclass
class OptimConfig:
    depth_lr: float = 1e-2
    pose_lr: float = 1e-4
    mask_lr: float = 1e-2
    iters: tuple = (200, 200, 300)   # per pyramid stage, coarse to fine
    stages: int = 3
    warmup: int = 60                 # linear step-size ramp length
    peak: float = 0.25               # schedule multiplier cap on the base rates
    beta1: float = 0.9
    beta2: float = 0.999
    seed: int = 0
    d_min: float = 0.1
    d_max: float = 100.0

    def __post_init__(self):
        if self.stages < 1:
            raise ValueError("need at least one pyramid stage")
        if min(self.depth_lr, self.pose_lr, self.mask_lr) <= 0:
            raise ValueError("step sizes must be positive")


@dataclass
class DirectResult:
    depth: DepthState
    poses: list                      # Pose6 per source
    mask_logits: list | None
    trace: list = field(default_factory=list)   # per-iteration breakdowns
    static: bool = False
    warnings: list = field(default_factory=list)

    def loss_values(self) -> np.ndarray:
        return np.array([t["total"] for t in self.trace])


def smoothed(values, window: int = 20) -> np.ndarray:
    """Moving average used to judge the descent of a loss trace."""
    values = np.asarray(values, dtype=np.float64)
    if len(values) < window:
        return values.copy()
    return np.convolve(values, np.ones(window) / window, mode="valid")


def _max_halvings(rows, cols):
    n = 0
    while rows % 2 == 0 and cols % 2 == 0 and rows > 2 and cols > 2:
        rows //= 2
        cols //= 2
        n += 1
    return n


def _downscale(img, times):
    for _ in range(times):
        img = downsample_half(img)
    return img


def _up(arr, wrap):
    """Double the resolution of a 2-D or 3-D array."""
    out = upsample_double(arr, wrap=wrap)
    return out[:, :, 0] if np.asarray(arr).ndim == 2 else out


def _pyramid_grads_to_logits(logits, d_disps, d_min, d_max):
    """Collapse per-level disparity gradients onto the stage's logits."""
    g = d_disps[-1]
    for lvl in range(len(d_disps) - 2, -1, -1):
        g = downsample_half_backward(g)[:, :, 0] + d_disps[lvl]
    return disparity_from_logits_backward(logits, g, d_min, d_max)


def direct_optimize(snip: Snippet, cfg: OptimConfig,
                    loss_cfg: LossConfig) -> DirectResult:
    """Minimize the view-synthesis loss over one snippet's depth and poses.

    The returned trace holds, for every iteration, the loss of the current
    estimate evaluated on the full-resolution objective (coarse-stage logits
    are upsampled first), so values are comparable across pyramid stages.
    """
    rows, cols = snip.cam.height, snip.cam.width
    use_mask = loss_cfg.lambda_e > 0
    warnings = []

    if snip.is_static():
        logits = np.zeros((rows, cols))
        return DirectResult(
            DepthState(logits, cfg.d_min, cfg.d_max),
            [Pose6.identity() for _ in snip.sources],
            [np.zeros((rows, cols, 2)) for _ in snip.sources] if use_mask else None,
            static=True, warnings=["StaticSnippet: no parallax, depth unidentifiable"])

    stages = min(cfg.stages, _max_halvings(rows, cols) + 1)
    if stages < cfg.stages:
        warnings.append(f"pyramid stages clamped to {stages} by image size")

    full_scales = min(loss_cfg.num_scales, _max_halvings(rows, cols) + 1)
    full_cfg = LossConfig(loss_cfg.lambda_s, loss_cfg.lambda_e,
                          loss_cfg.lambda_m, full_scales,
                          loss_cfg.smooth_mode, loss_cfg.wrap)

    def full_res_breakdown(stage, stage_logits, stage_masks, poses):
        lg = stage_logits
        ms = stage_masks
        for _ in range(stage):
            lg = upsample_double(lg, wrap=loss_cfg.wrap)[:, :, 0]
            if ms is not None:
                ms = [upsample_double(m, wrap=loss_cfg.wrap) for m in ms]
        disps = [disparity_from_logits(lg, cfg.d_min, cfg.d_max)]
        for _ in range(full_scales - 1):
            disps.append(downsample_half(disps[-1])[:, :, 0])
        res = total_loss(snip.target, snip.sources, disps, poses, ms,
                         snip.cam, full_cfg)
        return res.breakdown()

    r0, c0 = rows >> (stages - 1), cols >> (stages - 1)
    params = {"logits": np.zeros((r0, c0))}
    for k in range(snip.n_sources):
        params[f"pose{k}"] = np.zeros(6)
        if use_mask:
            params[f"mask{k}"] = np.zeros((r0, c0, 2))
    opt = Adam(params, cfg.beta1, cfg.beta2)
    lr = {"logits": cfg.depth_lr}
    for k in range(snip.n_sources):
        lr[f"pose{k}"] = cfg.pose_lr
        lr[f"mask{k}"] = cfg.mask_lr

    spatial = ["logits"] + [f"mask{k}" for k in range(snip.n_sources) if use_mask]
    stage_iters = [cfg.iters[min(i, len(cfg.iters) - 1)] for i in range(stages)]
    total_iters = sum(stage_iters)
    trace = []
    g_it = 0

    for stage in range(stages - 1, -1, -1):
        r_s, c_s = rows >> stage, cols >> stage
        cam_s = CylCamera(c_s, r_s, snip.cam.h_max, snip.cam.theta0, snip.cam.span)
        target = _downscale(snip.target, stage)
        sources = [_downscale(s, stage) for s in snip.sources]

        if params["logits"].shape != (r_s, c_s):
            # Carry parameters and Adam moments up one resolution so the fine
            # stage continues the coarse descent instead of restarting it.
            for key in spatial:
                params[key] = _up(params[key], loss_cfg.wrap)
                opt.m[key] = _up(opt.m[key], loss_cfg.wrap)
                opt.v[key] = np.maximum(_up(opt.v[key], loss_cfg.wrap), 0.0)

        n_scales = min(loss_cfg.num_scales, _max_halvings(r_s, c_s) + 1)
        stage_cfg = LossConfig(loss_cfg.lambda_s, loss_cfg.lambda_e,
                               loss_cfg.lambda_m, n_scales,
                               loss_cfg.smooth_mode, loss_cfg.wrap)

        for _ in range(stage_iters[stages - 1 - stage]):
            # One global schedule: a short warmup against full-size first
            # steps from empty moments, then cosine decay so Adam's noise
            # floor shrinks as the estimate settles.
            ramp = min(cfg.peak, (g_it + 1) / max(cfg.warmup, 1))
            progress = max(0.0, g_it - cfg.warmup) / max(1, total_iters - cfg.warmup)
            decay = 0.05 + 0.95 * 0.5 * (1.0 + np.cos(np.pi * progress))
            lr_it = {k: v * ramp * decay for k, v in lr.items()}
            g_it += 1

            disp0 = disparity_from_logits(params["logits"], cfg.d_min, cfg.d_max)
            disps = [disp0]
            for _ in range(n_scales - 1):
                disps.append(downsample_half(disps[-1])[:, :, 0])
            poses = [params[f"pose{k}"] for k in range(snip.n_sources)]
            mask_l = [params[f"mask{k}"] for k in range(snip.n_sources)] \
                if use_mask else None

            res, grads = total_loss(target, sources, disps, poses, mask_l,
                                    cam_s, stage_cfg, want_grads=True)
            if not np.isfinite(res.total):
                raise Diverged(f"loss became {res.total} at stage {stage}")
            if stage == 0:
                trace.append(res.breakdown())
            else:
                trace.append(full_res_breakdown(stage, params["logits"],
                                                mask_l, poses))

            gdict = {"logits": _pyramid_grads_to_logits(
                params["logits"], grads.disparities, cfg.d_min, cfg.d_max)}
            for k in range(snip.n_sources):
                gdict[f"pose{k}"] = grads.poses[k]
                if use_mask:
                    gdict[f"mask{k}"] = grads.mask_logits[k]
            opt.step(params, gdict, lr_it)
            if not all(np.isfinite(v).all() for v in params.values()):
                raise Diverged(f"parameters became non-finite at stage {stage}")

    return DirectResult(
        DepthState(params["logits"], cfg.d_min, cfg.d_max),
        [Pose6.from_vector(params[f"pose{k}"]) for k in range(snip.n_sources)],
        [params[f"mask{k}"] for k in range(snip.n_sources)] if use_mask else None,
        trace=trace, warnings=warnings)
