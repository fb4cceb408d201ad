"""Toy depth and pose/mask networks built from wrap-padded convolutions.

The depth network is a contracting/expanding stack with skip connections
returning a pyramid of bounded disparity maps; the pose network shares the
same encoder shape, ends in a global-average + linear head emitting six
numbers per source frame, and carries a small decoder for per-pixel
explainability logits.  Forward passes cache what the hand-written backward
passes need; gradients flow through the same wrap-aware primitives used by
the losses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch
from .ops import (Kernel, conv2d_wrap, conv2d_wrap_backward, upsample_double,
                  upsample_double_backward)
from .synthesis import Pose6, disparity_from_logits, disparity_from_logits_backward


@dataclass
class NetSpec:
    """Architecture knobs shared by both networks."""

    depth_channels: tuple = (8, 12, 16, 24, 32)
    pose_channels: tuple = (8, 12, 16, 24, 32)
    mask_channels: tuple = (8, 8, 8)
    kernel_size: int = 3
    num_scales: int = 4
    wrap: bool = True
    d_min: float = 0.1
    d_max: float = 100.0
    pose_scale: float = 0.01

    def __post_init__(self):
        if self.num_scales > len(self.depth_channels):
            raise ShapeMismatch("more output scales than encoder levels")
        if self.kernel_size % 2 == 0:
            raise ShapeMismatch("kernel size must be odd")

    @property
    def mask_base(self) -> int:
        """Encoder level feeding the mask decoder."""
        return min(2, len(self.pose_channels) - 1)


def _glorot(rng, shape, fan_in, fan_out):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape)


def _conv_param(rng, params, name, k, ci, co):
    fan = k * k
    params[name + ".w"] = _glorot(rng, (k, k, ci, co), fan * ci, fan * co)
    params[name + ".b"] = np.zeros(co)


def init_depth_params(spec: NetSpec, in_channels: int = 3, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    params = {}
    k = spec.kernel_size
    ch = spec.depth_channels
    prev = in_channels
    for i, c in enumerate(ch):
        _conv_param(rng, params, f"enc{i}", k, prev, c)
        prev = c
    levels = len(ch)
    for i in range(levels - 1, -1, -1):
        up_ch = ch[i] if i == levels - 1 else ch[i]
        cin = up_ch + (ch[i - 1] if i >= 1 else 0)
        cout = ch[i - 1] if i >= 1 else ch[0]
        _conv_param(rng, params, f"dec{i}", k, cin, cout)
    for s in range(spec.num_scales):
        cin = ch[s - 1] if s >= 1 else ch[0]
        _conv_param(rng, params, f"head{s}", k, cin, 1)
    return params


def init_pose_params(spec: NetSpec, n_sources: int, in_channels: int = 3,
                     seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    params = {}
    k = spec.kernel_size
    ch = spec.pose_channels
    prev = in_channels * (1 + n_sources)
    for i, c in enumerate(ch):
        _conv_param(rng, params, f"pconv{i}", k, prev, c)
        prev = c
    params["pose.w"] = _glorot(rng, (ch[-1], 6 * n_sources), ch[-1], 6 * n_sources)
    params["pose.b"] = np.zeros(6 * n_sources)
    base = spec.mask_base
    prev = ch[base]
    for s in range(base + 1):
        c = spec.mask_channels[min(s, len(spec.mask_channels) - 1)]
        _conv_param(rng, params, f"mup{s}", k, prev, c)
        prev = c
    params["mhead.w"] = _glorot(rng, (1, 1, prev, 2 * n_sources), prev, 2 * n_sources)
    params["mhead.b"] = np.zeros(2 * n_sources)
    return params


def _check_divisible(rows, cols, levels):
    if rows % (1 << levels) or cols % (1 << levels):
        raise ShapeMismatch(
            f"{rows}x{cols} input not divisible by 2^{levels}")


def _kern(params, name):
    return Kernel(params[name + ".w"], params[name + ".b"])


def depth_forward(params: dict, image, spec: NetSpec):
    """Image -> list of disparity maps (scale 0 finest) plus a backward cache."""
    x = np.asarray(image, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, :, None]
    levels = len(spec.depth_channels)
    _check_divisible(x.shape[0], x.shape[1], levels)

    cache = {"enc_in": [], "enc_out": [], "dec_in": [], "dec_out": {},
             "head_logits": {}, "input_shape": x.shape}
    for i in range(levels):
        cache["enc_in"].append(x)
        z = conv2d_wrap(x, _kern(params, f"enc{i}"), stride=2, wrap=spec.wrap)
        x = np.maximum(z, 0.0)
        cache["enc_out"].append(x)

    feats = cache["enc_out"]
    x = feats[-1]
    disparities = [None] * spec.num_scales
    for i in range(levels - 1, -1, -1):
        up = upsample_double(x, wrap=spec.wrap)
        cat = np.concatenate([up, feats[i - 1]], axis=2) if i >= 1 else up
        cache["dec_in"].append((i, cat))
        z = conv2d_wrap(cat, _kern(params, f"dec{i}"), stride=1, wrap=spec.wrap)
        x = np.maximum(z, 0.0)
        cache["dec_out"][i] = x
        if i < spec.num_scales:
            logits = conv2d_wrap(x, _kern(params, f"head{i}"), stride=1,
                                 wrap=spec.wrap)[:, :, 0]
            cache["head_logits"][i] = logits
            disparities[i] = disparity_from_logits(logits, spec.d_min, spec.d_max)
    return disparities, cache


def depth_backward(params: dict, cache: dict, d_disparities, spec: NetSpec) -> dict:
    """Backprop pyramid gradients to every depth-net parameter."""
    levels = len(spec.depth_channels)
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    g_feats = [np.zeros_like(f) for f in cache["enc_out"]]
    dec_in = dict(cache["dec_in"])

    g_up_next = None  # gradient flowing into up(x) of the stage below
    for i in range(levels):
        g = np.zeros_like(cache["dec_out"][i])
        if i < spec.num_scales and d_disparities[i] is not None:
            logits = cache["head_logits"][i]
            g_log = disparity_from_logits_backward(
                logits, np.asarray(d_disparities[i], dtype=np.float64),
                spec.d_min, spec.d_max)
            gx, gw, gb = conv2d_wrap_backward(
                cache["dec_out"][i], _kern(params, f"head{i}"),
                g_log[:, :, None], stride=1, wrap=spec.wrap)
            grads[f"head{i}.w"] += gw
            grads[f"head{i}.b"] += gb
            g += gx
        if g_up_next is not None:
            g += upsample_double_backward(g_up_next, wrap=spec.wrap)

        cat = dec_in[i]
        g = g * (cache["dec_out"][i] > 0)
        gx, gw, gb = conv2d_wrap_backward(cat, _kern(params, f"dec{i}"), g,
                                          stride=1, wrap=spec.wrap)
        grads[f"dec{i}.w"] += gw
        grads[f"dec{i}.b"] += gb
        if i >= 1:
            up_ch = cat.shape[2] - cache["enc_out"][i - 1].shape[2]
            g_up_next = gx[:, :, :up_ch]
            g_feats[i - 1] += gx[:, :, up_ch:]
        else:
            g_up_next = gx
    g_feats[levels - 1] += upsample_double_backward(g_up_next, wrap=spec.wrap)

    g_down = None
    for i in range(levels - 1, -1, -1):
        g = g_feats[i]
        if g_down is not None:
            g = g + g_down
        g = g * (cache["enc_out"][i] > 0)
        gx, gw, gb = conv2d_wrap_backward(cache["enc_in"][i],
                                          _kern(params, f"enc{i}"), g,
                                          stride=2, wrap=spec.wrap)
        grads[f"enc{i}.w"] += gw
        grads[f"enc{i}.b"] += gb
        g_down = gx if i >= 1 else None
    return grads


def pose_mask_forward(params: dict, target, sources, spec: NetSpec):
    """Frame stack -> (Pose6 per source, mask logits per source, cache)."""
    stack = np.concatenate(
        [np.asarray(target, dtype=np.float64)]
        + [np.asarray(s, dtype=np.float64) for s in sources], axis=2)
    levels = len(spec.pose_channels)
    _check_divisible(stack.shape[0], stack.shape[1], levels)
    n_src = len(sources)

    cache = {"enc_in": [], "enc_out": [], "mask_up": [], "mask_out": [],
             "n_src": n_src}
    x = stack
    for i in range(levels):
        cache["enc_in"].append(x)
        z = conv2d_wrap(x, _kern(params, f"pconv{i}"), stride=2, wrap=spec.wrap)
        x = np.maximum(z, 0.0)
        cache["enc_out"].append(x)

    pooled = x.mean(axis=(0, 1))
    cache["pooled"] = pooled
    vec = pooled @ params["pose.w"] + params["pose.b"]
    pose_vecs = spec.pose_scale * vec.reshape(n_src, 6)
    poses = [Pose6.from_vector(v) for v in pose_vecs]

    base = spec.mask_base
    m = cache["enc_out"][base]
    for s in range(base + 1):
        up = upsample_double(m, wrap=spec.wrap)
        cache["mask_up"].append(up)
        z = conv2d_wrap(up, _kern(params, f"mup{s}"), stride=1, wrap=spec.wrap)
        m = np.maximum(z, 0.0)
        cache["mask_out"].append(m)
    logits = conv2d_wrap(m, _kern(params, "mhead"), stride=1, wrap=spec.wrap)
    masks = [logits[:, :, 2 * k:2 * k + 2] for k in range(n_src)]
    return poses, masks, cache


def pose_mask_backward(params: dict, cache: dict, d_poses, d_masks,
                       spec: NetSpec) -> dict:
    """Backprop pose-vector and mask-logit gradients to the parameters."""
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    n_src = cache["n_src"]
    levels = len(spec.pose_channels)

    g_enc = [np.zeros_like(f) for f in cache["enc_out"]]

    if d_masks is not None:
        g_logits = np.concatenate(
            [np.asarray(d_masks[k], dtype=np.float64) for k in range(n_src)], axis=2)
        m_last = cache["mask_out"][-1]
        gx, gw, gb = conv2d_wrap_backward(m_last, _kern(params, "mhead"),
                                          g_logits, stride=1, wrap=spec.wrap)
        grads["mhead.w"] += gw
        grads["mhead.b"] += gb
        base = spec.mask_base
        for s in range(base, -1, -1):
            gx = gx * (cache["mask_out"][s] > 0)
            gup, gw, gb = conv2d_wrap_backward(cache["mask_up"][s],
                                               _kern(params, f"mup{s}"), gx,
                                               stride=1, wrap=spec.wrap)
            grads[f"mup{s}.w"] += gw
            grads[f"mup{s}.b"] += gb
            gx = upsample_double_backward(gup, wrap=spec.wrap)
        g_enc[base] += gx

    if d_poses is not None:
        g_vec = spec.pose_scale * np.concatenate(
            [np.asarray(g, dtype=np.float64).reshape(6) for g in d_poses])
        grads["pose.w"] += np.outer(cache["pooled"], g_vec)
        grads["pose.b"] += g_vec
        g_pool = params["pose.w"] @ g_vec
        last = cache["enc_out"][-1]
        g_enc[-1] += g_pool[None, None, :] / (last.shape[0] * last.shape[1])

    g_down = None
    for i in range(levels - 1, -1, -1):
        g = g_enc[i]
        if g_down is not None:
            g = g + g_down
        g = g * (cache["enc_out"][i] > 0)
        gx, gw, gb = conv2d_wrap_backward(cache["enc_in"][i],
                                          _kern(params, f"pconv{i}"), g,
                                          stride=2, wrap=spec.wrap)
        grads[f"pconv{i}.w"] += gw
        grads[f"pconv{i}.b"] += gb
        g_down = gx if i >= 1 else None
    return grads
