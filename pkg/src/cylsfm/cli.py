"""Command-line frontend.

Every subcommand is a thin adapter over the library: it parses arguments,
loads/saves files, and calls one pipeline stage.  A flat key=value config
file plus ``--set`` overrides feeds the run configuration; unknown keys are
rejected.  With a fixed ``--seed`` and ``--threads 1`` all outputs are
byte-reproducible.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import fileio, synthetic
from .camera import CylCamera, PinholeCamera
from .datasets import (crop_fov, CubeFaceSet, equirect_to_cyl, filter_static,
                       load_manifest, load_snippet, load_split_snippets,
                       make_sequences, save_manifest, stitch_cubemap,
                       FrameRecord)
from .direct import DirectResult, OptimConfig, direct_optimize
from .errors import CylSfmError
from .gradcheck import COMPONENTS, run_gradcheck
from .losses import LossConfig
from .metrics import ate, depth_metrics, positions_from_relative_poses
from .nets import NetSpec, depth_forward
from .render import anaglyph, build_mesh, render_ods, render_view, write_ply
from .snippet import relative_pose
from .synthesis import Pose6
from .train import (Checkpoint, TrainConfig, load_checkpoint,
                    params_from_checkpoint, train)

DEFAULTS = {
    "camera.width": 128,
    "camera.height": 32,
    "camera.hmax": 0.0,            # 0 selects pi*H/W (square cylinder pixels)
    "loss.lambda_s": 2.0,
    "loss.lambda_e": 0.0,
    "loss.lambda_m": 0.2,
    "loss.num_scales": 4,
    "loss.smooth_mode": "second_order",
    "loss.wrap": True,
    "optim.depth_lr": 1e-2,
    "optim.pose_lr": 1e-4,
    "optim.mask_lr": 1e-2,
    "optim.iters": "200,200,300",
    "optim.stages": 3,
    "optim.warmup": 60,
    "optim.peak": 0.25,
    "train.steps": 2000,
    "train.lr": 2e-4,
    "train.checkpoint_every": 0,
    "net.depth_channels": "8,12,16,24,32",
    "net.pose_channels": "8,12,16,24,32",
    "net.mask_channels": "8,8,8",
    "net.kernel_size": 3,
    "net.num_scales": 4,
    "net.wrap": True,
    "data.tau": 0.05,
    "data.fractions": "0.8,0.1,0.1",
    "seed": 0,
    "threads": 1,
}


class UsageError(Exception):
    pass


def _coerce(key, raw):
    ref = DEFAULTS[key]
    if isinstance(ref, bool):
        if str(raw).lower() in ("1", "true", "yes", "on"):
            return True
        if str(raw).lower() in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"config key {key} expects a boolean, got {raw!r}")
    if isinstance(ref, int):
        return int(raw)
    if isinstance(ref, float):
        return float(raw)
    return str(raw)


def load_config(path=None, overrides=()) -> dict:
    cfg = dict(DEFAULTS)
    lines = []
    if path:
        with open(path) as f:
            lines = [ln.strip() for ln in f]
    for item in list(lines) + list(overrides):
        if not item or item.startswith("#"):
            continue
        if "=" not in item:
            raise UsageError(f"expected key=value, got {item!r}")
        key, _, value = item.partition("=")
        key = key.strip()
        if key not in DEFAULTS:
            raise UsageError(f"unknown config key {key!r}")
        cfg[key] = _coerce(key, value.strip())
    return cfg


def _ints(text):
    return tuple(int(v) for v in str(text).split(",") if v != "")


def _floats(text):
    return tuple(float(v) for v in str(text).split(",") if v != "")


def camera_from_config(cfg) -> CylCamera:
    return CylCamera(cfg["camera.width"], cfg["camera.height"], cfg["camera.hmax"])


def loss_from_config(cfg) -> LossConfig:
    return LossConfig(cfg["loss.lambda_s"], cfg["loss.lambda_e"],
                      cfg["loss.lambda_m"], cfg["loss.num_scales"],
                      cfg["loss.smooth_mode"], cfg["loss.wrap"])


def optim_from_config(cfg) -> OptimConfig:
    return OptimConfig(cfg["optim.depth_lr"], cfg["optim.pose_lr"],
                       cfg["optim.mask_lr"], _ints(cfg["optim.iters"]),
                       cfg["optim.stages"], cfg["optim.warmup"],
                       cfg["optim.peak"], seed=cfg["seed"])


def net_from_config(cfg) -> NetSpec:
    return NetSpec(_ints(cfg["net.depth_channels"]),
                   _ints(cfg["net.pose_channels"]),
                   _ints(cfg["net.mask_channels"]),
                   cfg["net.kernel_size"], cfg["net.num_scales"],
                   cfg["net.wrap"])


def cmd_make_synthetic(args, cfg):
    cam = camera_from_config(cfg)
    scene = synthetic.CylinderScene.make(args.radius, seed=args.scene_seed,
                                         max_freq=args.max_freq)
    if args.trajectory == "line":
        positions = synthetic.line_positions(args.frames, args.baseline,
                                             heading=args.heading)
    else:
        positions = synthetic.walk_positions(args.frames, args.baseline,
                                             seed=cfg["seed"],
                                             max_radius=args.radius * 0.2)
    os.makedirs(os.path.join(args.out, "color"), exist_ok=True)
    os.makedirs(os.path.join(args.out, "depth"), exist_ok=True)
    for k, pos in enumerate(positions):
        img, dep = synthetic.render_panorama(scene, cam, pos)
        fileio.write_ppm(os.path.join(args.out, "color", f"{k:06d}.ppm"), img)
        fileio.write_pfm(os.path.join(args.out, "depth", f"{k:06d}.pfm"), dep)
    fileio.write_poses(os.path.join(args.out, "poses.txt"),
                       [Pose6(t=p) for p in positions])
    with open(os.path.join(args.out, "camera.txt"), "w") as f:
        f.write(f"width={cam.width} height={cam.height} hmax={cam.h_max:.17g}\n")
    print(f"wrote {len(positions)} frames to {args.out}")
    return 0


def cmd_prepare(args, cfg):
    cam = camera_from_config(cfg)
    data = args.data
    poses_path = os.path.join(data, "poses.txt")
    poses = fileio.read_poses(poses_path) if os.path.exists(poses_path) else None

    color_dir = os.path.join(data, "color")
    names = sorted(os.listdir(color_dir))
    meta = {}
    if poses is not None:
        kept = filter_static(poses, cfg["data.tau"])
        meta["static_filter"] = "applied"
    else:
        kept = list(range(len(names)))
        meta["static_filter"] = "skipped (no pose ground truth)"

    out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    frames = []
    for k in kept:
        color = os.path.relpath(os.path.join(color_dir, names[k]), out_dir)
        depth_path = os.path.join(data, "depth", names[k].rsplit(".", 1)[0] + ".pfm")
        depth = os.path.relpath(depth_path, out_dir) if os.path.exists(depth_path) else None
        pose = poses[k] if poses is not None else None
        frames.append(FrameRecord(color, depth, pose))

    manifest = make_sequences(frames, _floats(cfg["data.fractions"]),
                              seed=cfg["seed"], cam=cam)
    manifest.meta.update(meta)
    save_manifest(args.out, manifest)
    counts = {t: len(manifest.split(t)) for t in ("train", "val", "test")}
    print(f"manifest {args.out}: {len(frames)} frames, snippets {counts}")
    return 0


def cmd_stitch(args, cfg):
    cam = camera_from_config(cfg)
    face_cam = PinholeCamera.from_fov(args.fov, args.face_size, args.face_size)
    images = {}
    depths = {} if args.with_depth else None
    for name in ("front", "back", "left", "right", "up", "down"):
        images[name] = fileio.read_ppm(os.path.join(args.faces, f"{name}.ppm"))
        if args.with_depth:
            depths[name] = fileio.read_pfm(os.path.join(args.faces, f"{name}.pfm"))
    pano, depth = stitch_cubemap(CubeFaceSet(images, face_cam, depths), cam)
    fileio.write_ppm(args.out, pano)
    if depth is not None and args.out_depth:
        fileio.write_pfm(args.out_depth, depth)
    return 0


def cmd_warp_equirect(args, cfg):
    cam = camera_from_config(cfg)
    img = fileio.read_ppm(args.input)
    fileio.write_ppm(args.out, equirect_to_cyl(img, cam))
    return 0


def _pose_report_lines(results):
    for center, res in results:
        for k, pose in enumerate(res.poses):
            vec = ",".join(f"{v:.17g}" for v in pose.to_vector())
            yield f"snippet={center} source={k} pose={vec}"


def cmd_optimize(args, cfg):
    manifest = load_manifest(args.manifest)
    loss_cfg = loss_from_config(cfg)
    opt_cfg = optim_from_config(cfg)
    triples = manifest.split(args.split) if args.snippet is None \
        else [t for t in manifest.split(args.split)
              if t[len(t) // 2] == args.snippet]
    if not triples:
        raise CylSfmError(f"no snippets selected from split {args.split!r}")
    os.makedirs(args.out, exist_ok=True)
    results = []
    for tri in triples:
        snip = load_snippet(manifest, tri)
        fov = args.fov
        if fov and fov < 360.0:
            cropped = []
            for img in [snip.target] + snip.sources:
                c_img, c_cam = crop_fov(img, snip.cam, fov, args.fov_center)
                cropped.append(c_img)
            snip.target, snip.sources = cropped[0], cropped[1:]
            snip.cam = c_cam
            loss_cfg = LossConfig(loss_cfg.lambda_s, loss_cfg.lambda_e,
                                  loss_cfg.lambda_m, loss_cfg.num_scales,
                                  loss_cfg.smooth_mode, wrap=False)
        res = direct_optimize(snip, opt_cfg, loss_cfg)
        center = tri[len(tri) // 2]
        results.append((center, res))
        fileio.write_pfm(os.path.join(args.out, f"depth_{center:06d}.pfm"),
                         res.depth.depth())
        with open(os.path.join(args.out, f"trace_{center:06d}.txt"), "w") as f:
            for i, row in enumerate(res.trace):
                f.write(f"iter={i} " + " ".join(
                    f"{k}={v:.17g}" for k, v in row.items()) + "\n")
    with open(os.path.join(args.out, "poses_pred.txt"), "w") as f:
        for line in _pose_report_lines(results):
            f.write(line + "\n")
    print(f"optimized {len(results)} snippets into {args.out}")
    return 0


def cmd_train(args, cfg):
    manifest = load_manifest(args.manifest)
    snippets = load_split_snippets(manifest, "train")
    spec = net_from_config(cfg)
    tr_cfg = TrainConfig(args.steps or cfg["train.steps"], cfg["train.lr"],
                         seed=cfg["seed"],
                         checkpoint_every=cfg["train.checkpoint_every"],
                         log_path=args.log)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    result = train(snippets, spec, tr_cfg, loss_from_config(cfg),
                   checkpoint_path=args.out, resume_from=args.resume)
    print(f"trained {tr_cfg.steps} steps, final loss "
          f"{result.trace[-1]['total']:.6f}, checkpoint {args.out}")
    return 0


def cmd_predict(args, cfg):
    manifest = load_manifest(args.manifest)
    ckpt = load_checkpoint(args.checkpoint)
    depth_params, _ = params_from_checkpoint(ckpt)
    spec = net_from_config(cfg)
    os.makedirs(args.out, exist_ok=True)
    count = 0
    for tri in manifest.split(args.split):
        snip = load_snippet(manifest, tri)
        disps, _ = depth_forward(depth_params, snip.target, spec)
        depth = 1.0 / disps[0]
        center = tri[len(tri) // 2]
        fileio.write_pfm(os.path.join(args.out, f"depth_{center:06d}.pfm"), depth)
        count += 1
    print(f"predicted {count} depth maps into {args.out}")
    return 0


def cmd_eval_depth(args, cfg):
    manifest = load_manifest(args.manifest)
    rows = []
    metrics = []
    for tri in manifest.split(args.split):
        center = tri[len(tri) // 2]
        rec = manifest.frames[center]
        if rec.depth is None:
            continue
        gt = fileio.read_pfm(os.path.join(manifest.base_dir, rec.depth))
        pred = fileio.read_pfm(os.path.join(args.pred, f"depth_{center:06d}.pfm"))
        m = depth_metrics(pred, gt, median_scale=not args.no_median_scale)
        metrics.append(m)
        rows.append((f"{center:06d}", m.as_dict()))
    if not metrics:
        raise CylSfmError("no snippets with ground-truth depth in this split")
    agg = {k: float(np.mean([m.as_dict()[k] for m in metrics]))
           for k in metrics[0].as_dict()}
    fileio.write_report(args.out, "depth metrics "
                        "(abs_rel sq_rel rmse rmse_log d1 d2 d3)", rows, agg)
    print(" ".join(f"{k}={v:.4f}" for k, v in agg.items()))
    return 0


def cmd_eval_pose(args, cfg):
    manifest = load_manifest(args.manifest)
    pred = {}
    with open(args.pred) as f:
        for line in f:
            fields = dict(p.split("=", 1) for p in line.split())
            center = int(fields["snippet"])
            pred.setdefault(center, {})[int(fields["source"])] = \
                Pose6.from_vector(np.array([float(v) for v in
                                            fields["pose"].split(",")]))
    pred_snips, gt_snips = [], []
    rows = []
    for tri in manifest.split(args.split):
        center = tri[len(tri) // 2]
        if center not in pred:
            continue
        poses = [pred[center][k] for k in sorted(pred[center])]
        gt_rel = [relative_pose(manifest.frames[center].pose.t,
                                manifest.frames[i].pose.t)
                  for i in tri if i != center]
        p_pos = positions_from_relative_poses(poses)
        g_pos = positions_from_relative_poses(gt_rel)
        pred_snips.append(p_pos)
        gt_snips.append(g_pos)
    if not pred_snips:
        raise CylSfmError("no predicted snippets matched the manifest split")
    report = ate(pred_snips, gt_snips)
    for i, (p, g) in enumerate(zip(pred_snips, gt_snips)):
        from .metrics import snippet_ate
        rows.append((str(i), {"ate": snippet_ate(p, g)}))
    fileio.write_report(args.out, "snippet trajectory error", rows,
                        report.as_dict())
    print(f"ate_mean={report.mean:.6f} ate_std={report.std:.6f} "
          f"snippets={report.count}")
    return 0


def _load_pose_arg(text) -> Pose6:
    vals = [float(v) for v in text.split(",")]
    if len(vals) != 6:
        raise UsageError("pose needs 6 comma-separated numbers")
    return Pose6.from_vector(np.array(vals))


def cmd_render_view(args, cfg):
    pano = fileio.read_ppm(args.pano)
    depth = fileio.read_pfm(args.depth)
    cam = CylCamera(pano.shape[1], pano.shape[0], cfg["camera.hmax"])
    mesh = build_mesh(pano, depth, cam)
    if args.mesh_out:
        write_ply(args.mesh_out, mesh)
    if args.camera == "pinhole":
        out_cam = PinholeCamera.from_fov(args.pinhole_fov, args.width or 256,
                                         args.height or 256)
    else:
        out_cam = CylCamera(args.width or cam.width, args.height or cam.height,
                            cfg["camera.hmax"])
    img, _, covered = render_view(mesh, _load_pose_arg(args.pose), out_cam)
    fileio.write_ppm(args.out, img * covered[..., None])
    return 0


def cmd_render_ods(args, cfg):
    if args.radius <= 0:
        raise UsageError("--radius must be positive")
    pano = fileio.read_ppm(args.pano)
    depth = fileio.read_pfm(args.depth)
    cam = CylCamera(pano.shape[1], pano.shape[0], cfg["camera.hmax"])
    mesh = build_mesh(pano, depth, cam)
    out_cam = CylCamera(args.width or cam.width, args.height or cam.height,
                        cfg["camera.hmax"])
    pair = render_ods(mesh, args.radius, out_cam)
    fileio.write_ppm(args.left, pair.left)
    fileio.write_ppm(args.right, pair.right)
    if args.anaglyph:
        fileio.write_ppm(args.anaglyph, anaglyph(pair))
    return 0


def cmd_gradcheck(args, cfg):
    report = run_gradcheck(trials=args.trials, seed=cfg["seed"])
    failed = False
    for name, err in report.items():
        status = "ok" if err < 1e-4 else "FAIL"
        print(f"{name:12s} max_rel_err={err:.3e} {status}")
        failed |= err >= 1e-4
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="cylsfm",
        description="Unsupervised depth and ego-motion on cylindrical panoramas")
    ap.add_argument("--config", help="flat key=value configuration file")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override one configuration key")
    ap.add_argument("--seed", type=int, help="override the run seed")
    ap.add_argument("--threads", type=int, default=1,
                    help="worker threads (1 guarantees bit-reproducible runs)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-synthetic", help="generate textured-cylinder scenes")
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=12)
    p.add_argument("--radius", type=float, default=5.0)
    p.add_argument("--baseline", type=float, default=0.1)
    p.add_argument("--heading", type=float, default=0.7)
    p.add_argument("--trajectory", choices=("line", "walk"), default="walk")
    p.add_argument("--scene-seed", type=int, default=0)
    p.add_argument("--max-freq", type=int, default=8)
    p.set_defaults(func=cmd_make_synthetic)

    p = sub.add_parser("prepare", help="filter, sequence and write a manifest")
    p.add_argument("--data", required=True, help="directory from make-synthetic")
    p.add_argument("--out", required=True, help="manifest path to write")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("stitch", help="stitch a cube-map face set to a panorama")
    p.add_argument("--faces", required=True, help="directory with <face>.ppm")
    p.add_argument("--fov", type=float, default=100.0)
    p.add_argument("--face-size", type=int, default=768)
    p.add_argument("--with-depth", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--out-depth")
    p.set_defaults(func=cmd_stitch)

    p = sub.add_parser("warp-equirect", help="equirectangular to cylindrical")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_warp_equirect)

    p = sub.add_parser("optimize", help="direct depth+pose on snippets")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--snippet", type=int, help="only the snippet centered here")
    p.add_argument("--fov", type=float, default=360.0,
                   help="crop to this field of view before optimizing")
    p.add_argument("--fov-center", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("train", help="train the depth/pose networks")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--steps", type=int)
    p.add_argument("--log", help="metrics log path")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="depth maps from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval-depth", help="depth metrics against ground truth")
    p.add_argument("--pred", required=True, help="directory of predicted PFMs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--no-median-scale", action="store_true")
    p.add_argument("--out", required=True, help="report path")
    p.set_defaults(func=cmd_eval_depth)

    p = sub.add_parser("eval-pose", help="snippet ATE against ground truth")
    p.add_argument("--pred", required=True, help="poses_pred.txt from optimize")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval_pose)

    p = sub.add_parser("render-view", help="rasterize a novel view")
    p.add_argument("--pano", required=True)
    p.add_argument("--depth", required=True)
    p.add_argument("--pose", default="0,0,0,0,0,0")
    p.add_argument("--camera", choices=("cyl", "pinhole"), default="cyl")
    p.add_argument("--pinhole-fov", type=float, default=90.0)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--mesh-out", help="also export the textured mesh (PLY)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render_view)

    p = sub.add_parser("render-ods", help="omnidirectional stereo pair")
    p.add_argument("--pano", required=True)
    p.add_argument("--depth", required=True)
    p.add_argument("--radius", type=float, required=True)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--left", required=True)
    p.add_argument("--right", required=True)
    p.add_argument("--anaglyph")
    p.set_defaults(func=cmd_render_ods)

    p = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p.add_argument("--trials", type=int, default=20)
    p.set_defaults(func=cmd_gradcheck)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
        if args.seed is not None:
            cfg["seed"] = args.seed
        cfg["threads"] = args.threads
        return args.func(args, cfg)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except CylSfmError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
