"""Finite-difference verification of every analytic backward pass.

Each check builds random small instances, reduces the operation's output to a
scalar through a fixed random projection, and compares the analytic gradient
against central differences at probe points chosen away from the kinks of
piecewise-linear pieces (|x| terms, bilinear cell boundaries).
"""

from __future__ import annotations

import numpy as np

from .camera import CylCamera
from .losses import LossConfig, total_loss
from .nets import (NetSpec, depth_backward, depth_forward, init_depth_params,
                   init_pose_params, pose_mask_backward, pose_mask_forward)
from .ops import (Kernel, bilinear_sample_wrap, bilinear_sample_wrap_backward,
                  conv2d_wrap, conv2d_wrap_backward)
from .synthesis import (Pose6, disparity_from_logits,
                        disparity_from_logits_backward, synthesize_view,
                        synthesize_view_backward)
from .synthetic import CylinderScene, line_positions, make_snippet

COMPONENTS = ("conv", "sampler", "synth", "total_loss", "depth_net", "pose_net")

FD_STEP = 1e-5


def fd_gradient(f, x, indices, step=FD_STEP):
    """Central finite differences of scalar f at the given flat indices of x.

    Returns (grads, smooth).  ``smooth`` marks probes where f is actually
    differentiable across the probe interval; the losses contain |.| terms
    and bilinear cells, and a probe that straddles such a kink measures a mix
    of one-sided slopes rather than the derivative.  Two tests catch this:
    the half-step estimate must agree with the full-step one (kink off
    center), and the slope jump extrapolated from one-sided differences at
    two scales must vanish (kink at the center, which step-halving alone
    cannot see).  Callers compare analytic gradients only at smooth probes.
    """
    x = np.array(x, dtype=np.float64)
    flat = x.ravel()
    out = np.empty(len(indices))
    smooth = np.empty(len(indices), dtype=bool)
    f0 = f(x)

    def eval_at(idx, h):
        orig = flat[idx]
        flat[idx] = orig + h
        fp = f(x)
        flat[idx] = orig - h
        fm = f(x)
        flat[idx] = orig
        return fp, fm

    for n, idx in enumerate(indices):
        fp, fm = eval_at(idx, step)
        fph, fmh = eval_at(idx, step / 2.0)
        full = (fp - fm) / (2.0 * step)
        half = (fph - fmh) / step
        jump = 2.0 * (fph + fmh - 2.0 * f0) / (step / 2.0) \
            - (fp + fm - 2.0 * f0) / step
        out[n] = full
        scale = max(abs(full), abs(half), 1e-6)
        smooth[n] = (abs(full - half) <= 4e-5 * scale
                     and abs(jump) <= 4e-5 * scale)
    return out, smooth


def max_rel_error(analytic, numeric, floor=1e-4):
    """Worst |a - n| / max(|a|, |n|, floor) over probe points."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def _probe(rng, size, count):
    count = min(count, size)
    return rng.choice(size, size=count, replace=False)


def _safe_coords(rng, shape, cols, rows):
    """Sample coordinates at least 0.05 px away from bilinear cell edges."""
    ci = rng.integers(-1, cols + 1, size=shape) + rng.uniform(0.05, 0.95, size=shape)
    cj = rng.integers(0, rows - 1, size=shape) + rng.uniform(0.05, 0.95, size=shape)
    return ci, cj


def check_conv(trials=20, seed=0, probes=40):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        rows = 2 * rng.integers(1, 4)
        cols = 2 * rng.integers(2, 5)
        ci = rng.integers(1, 4)
        co = rng.integers(1, 4)
        k = int(rng.choice([1, 3]))
        stride = int(rng.choice([1, 2]))
        wrap = bool(rng.integers(0, 2))
        x = rng.standard_normal((rows, cols, ci))
        kern = Kernel(rng.standard_normal((k, k, ci, co)) * 0.5,
                      rng.standard_normal(co) * 0.1)
        w_out = rng.standard_normal((rows // stride, cols // stride, co))

        out = conv2d_wrap(x, kern, stride=stride, wrap=wrap)
        gx, gw, gb = conv2d_wrap_backward(x, kern, w_out, stride=stride, wrap=wrap)

        def f_x(v):
            return float(np.sum(w_out * conv2d_wrap(v, kern, stride=stride, wrap=wrap)))

        def f_w(v):
            return float(np.sum(w_out * conv2d_wrap(
                x, Kernel(v, kern.bias), stride=stride, wrap=wrap)))

        def f_b(v):
            return float(np.sum(w_out * conv2d_wrap(
                x, Kernel(kern.weights, v), stride=stride, wrap=wrap)))

        for grad, arr, fn in ((gx, x, f_x), (gw, kern.weights, f_w),
                              (gb, kern.bias, f_b)):
            idx = _probe(rng, arr.size, probes)
            num, ok = fd_gradient(fn, arr, idx)
            worst = max(worst, max_rel_error(grad.ravel()[idx][ok], num[ok]))
        del out
    return worst


def check_sampler(trials=20, seed=0, probes=40):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        rows = rng.integers(3, 9)
        cols = rng.integers(3, 9)
        ch = rng.integers(1, 4)
        wrap = bool(rng.integers(0, 2))
        img = rng.standard_normal((rows, cols, ch))
        ci, cj = _safe_coords(rng, (rng.integers(2, 7), rng.integers(2, 7)),
                              cols, rows)
        w_out = rng.standard_normal(ci.shape + (ch,))

        g_img, g_i, g_j = bilinear_sample_wrap_backward(img, ci, cj, w_out, wrap=wrap)

        def f_img(v):
            s, _ = bilinear_sample_wrap(v, ci, cj, wrap=wrap)
            return float(np.sum(w_out * s))

        def f_ci(v):
            s, _ = bilinear_sample_wrap(img, v, cj, wrap=wrap)
            return float(np.sum(w_out * s))

        def f_cj(v):
            s, _ = bilinear_sample_wrap(img, ci, v, wrap=wrap)
            return float(np.sum(w_out * s))

        for grad, arr, fn in ((g_img, img, f_img), (g_i, ci, f_ci), (g_j, cj, f_cj)):
            idx = _probe(rng, arr.size, probes)
            num, ok = fd_gradient(fn, arr, idx)
            worst = max(worst, max_rel_error(grad.ravel()[idx][ok], num[ok]))
    return worst


def _random_snippet(rng, cam, scene=None):
    scene = scene or CylinderScene.make(radius=5.0, seed=int(rng.integers(1 << 16)))
    heading = float(rng.uniform(0, 2 * np.pi))
    positions = line_positions(3, 0.12, heading=heading)
    return make_snippet(scene, cam, positions)


def check_synth(trials=20, seed=0, probes=40):
    rng = np.random.default_rng(seed)
    cam = CylCamera(16, 8)
    worst = 0.0
    for _ in range(trials):
        snip = _random_snippet(rng, cam)
        logits = rng.standard_normal((8, 16)) * 0.5
        depth = 1.0 / disparity_from_logits(logits)
        pose = snip.gt_poses[0]
        pose = Pose6(pose.t + rng.normal(0, 0.02, 3), rng.normal(0, 0.02, 3))
        w_out = rng.standard_normal((8, 16, 3))

        res = synthesize_view(snip.sources[0], depth, pose, cam)
        g_depth, g_pose = synthesize_view_backward(res, w_out)
        g_logits = disparity_from_logits_backward(
            logits, -g_depth / disparity_from_logits(logits) ** 2)

        def f_logits(v):
            d = 1.0 / disparity_from_logits(v)
            r = synthesize_view(snip.sources[0], d, pose, cam)
            return float(np.sum(w_out * r.i_proj))

        def f_pose(v):
            r = synthesize_view(snip.sources[0], depth, Pose6.from_vector(v), cam)
            return float(np.sum(w_out * r.i_proj))

        idx = _probe(rng, logits.size, probes)
        num, ok = fd_gradient(f_logits, logits, idx)
        worst = max(worst, max_rel_error(g_logits.ravel()[idx][ok], num[ok]))
        num, ok = fd_gradient(f_pose, pose.to_vector(), range(6))
        worst = max(worst, max_rel_error(g_pose[ok], num[ok]))
    return worst


def check_total_loss(trials=20, seed=0, probes=30):
    rng = np.random.default_rng(seed)
    cam = CylCamera(16, 8)
    cfg = LossConfig(lambda_s=0.5, lambda_e=0.2, lambda_m=0.3, num_scales=2)
    worst = 0.0
    for trial in range(trials):
        cfg.smooth_mode = "second_order" if trial % 2 == 0 else "image_aware"
        snip = _random_snippet(rng, cam)
        disps = [disparity_from_logits(rng.standard_normal((8 >> s, 16 >> s)) * 0.4)
                 for s in range(2)]
        # Random poses rather than near-ground-truth ones: an almost perfect
        # warp makes the photometric differences cluster around zero, right on
        # the |.| kink where finite differences stop being meaningful.
        poses = [np.concatenate([rng.normal(0, 0.03, 3), rng.normal(0, 0.05, 3)])
                 for _ in snip.gt_poses]
        masks = [rng.standard_normal((8, 16, 2)) * 0.5 for _ in snip.sources]

        _, grads = total_loss(snip.target, snip.sources, disps, poses, masks,
                              cam, cfg, want_grads=True)

        for s in range(2):
            def f_disp(v, s=s):
                d2 = list(disps)
                d2[s] = v
                return total_loss(snip.target, snip.sources, d2, poses, masks,
                                  cam, cfg).total

            idx = _probe(rng, disps[s].size, probes)
            num, ok = fd_gradient(f_disp, disps[s], idx)
            worst = max(worst, max_rel_error(grads.disparities[s].ravel()[idx][ok], num[ok]))

        for k in range(len(poses)):
            def f_pose(v, k=k):
                p2 = list(poses)
                p2[k] = v
                return total_loss(snip.target, snip.sources, disps, p2, masks,
                                  cam, cfg).total

            num, ok = fd_gradient(f_pose, poses[k], range(6))
            worst = max(worst, max_rel_error(grads.poses[k][ok], num[ok]))

        for k in range(len(masks)):
            def f_mask(v, k=k):
                m2 = list(masks)
                m2[k] = v
                return total_loss(snip.target, snip.sources, disps, poses, m2,
                                  cam, cfg).total

            idx = _probe(rng, masks[k].size, probes)
            num, ok = fd_gradient(f_mask, masks[k], idx)
            worst = max(worst, max_rel_error(grads.mask_logits[k].ravel()[idx][ok], num[ok]))
    return worst


def _tiny_spec():
    return NetSpec(depth_channels=(4, 6, 8), pose_channels=(4, 6, 8),
                   mask_channels=(4, 4, 4), num_scales=2)


def check_depth_net(trials=20, seed=0, probes=25):
    rng = np.random.default_rng(seed)
    spec = _tiny_spec()
    worst = 0.0
    for trial in range(trials):
        params = init_depth_params(spec, seed=int(rng.integers(1 << 16)))
        img = rng.uniform(0, 1, (8, 16, 3))
        w_outs = [rng.standard_normal((8 >> s, 16 >> s)) for s in range(spec.num_scales)]

        disps, cache = depth_forward(params, img, spec)
        grads = depth_backward(params, cache, w_outs, spec)

        def loss_of(p):
            d, _ = depth_forward(p, img, spec)
            return float(sum(np.sum(w * di) for w, di in zip(w_outs, d)))

        name = list(params)[trial % len(params)]
        idx = _probe(rng, params[name].size, probes)

        def f(v):
            p2 = dict(params)
            p2[name] = v
            return loss_of(p2)

        num, ok = fd_gradient(f, params[name], idx)
        worst = max(worst, max_rel_error(grads[name].ravel()[idx][ok], num[ok]))
    return worst


def check_pose_net(trials=20, seed=0, probes=25):
    rng = np.random.default_rng(seed)
    spec = _tiny_spec()
    worst = 0.0
    for trial in range(trials):
        params = init_pose_params(spec, n_sources=2, seed=int(rng.integers(1 << 16)))
        target = rng.uniform(0, 1, (8, 16, 3))
        sources = [rng.uniform(0, 1, (8, 16, 3)) for _ in range(2)]
        w_pose = [rng.standard_normal(6) for _ in range(2)]
        w_mask = [rng.standard_normal((8, 16, 2)) for _ in range(2)]

        poses, masks, cache = pose_mask_forward(params, target, sources, spec)
        grads = pose_mask_backward(params, cache, w_pose, w_mask, spec)

        def loss_of(p):
            po, ma, _ = pose_mask_forward(p, target, sources, spec)
            val = sum(float(np.dot(w, q.to_vector())) for w, q in zip(w_pose, po))
            val += sum(float(np.sum(w * m)) for w, m in zip(w_mask, ma))
            return val

        name = list(params)[trial % len(params)]
        idx = _probe(rng, params[name].size, probes)

        def f(v):
            p2 = dict(params)
            p2[name] = v
            return loss_of(p2)

        num, ok = fd_gradient(f, params[name], idx)
        worst = max(worst, max_rel_error(grads[name].ravel()[idx][ok], num[ok]))
    return worst


_CHECKS = {
    "conv": check_conv,
    "sampler": check_sampler,
    "synth": check_synth,
    "total_loss": check_total_loss,
    "depth_net": check_depth_net,
    "pose_net": check_pose_net,
}


def run_gradcheck(components=COMPONENTS, trials=20, seed=0) -> dict:
    """Max relative gradient error per component."""
    report = {}
    for name in components:
        if name not in _CHECKS:
            raise ValueError(f"unknown component {name!r}")
        report[name] = _CHECKS[name](trials=trials, seed=seed)
    return report
