"""Dataset preparation: ingestion, filtering, cropping and sequencing.

Three ingestion paths produce cylindrical panoramas: stitching a six-face
cube map (with optional planar-depth faces converted to radial depth),
warping a full-sphere equirectangular image, or consuming panoramas as-is.
Prepared data is described by a line-oriented manifest listing frames,
snippet triples and their train/val/test split.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .camera import CylCamera, PinholeCamera, pinhole_project
from .errors import BadFov, CoverageGap, CylSfmError, ShapeMismatch, TooFewFrames
from .fileio import read_pfm, read_ppm
from .ops import bilinear_sample_wrap, downsample_half, upsample_double
from .snippet import Snippet, relative_pose
from .synthesis import Pose6

FACE_NAMES = ("front", "back", "left", "right", "up", "down")

# Rotation taking a rig-frame direction into each face camera's frame (the
# face looks along its own +z; the rig's y axis points down).
_FACE_ROTS = {
    "front": np.eye(3),
    "back": np.array([[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]]),
    "right": np.array([[0.0, 0.0, -1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]),
    "left": np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]]),
    "up": np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0]]),
    "down": np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]]),
}


def face_axis(name) -> np.ndarray:
    """Optical axis of a cube face, expressed in the rig frame."""
    return _FACE_ROTS[name].T @ np.array([0.0, 0.0, 1.0])


@dataclass
class CubeFaceSet:
    """Six square images sharing one pinhole camera with FOV > 90 degrees."""

    images: dict
    cam: PinholeCamera
    depths: dict | None = None      # planar depth along each face's optical axis

    def __post_init__(self):
        if set(self.images) != set(FACE_NAMES):
            raise ShapeMismatch(f"need faces {FACE_NAMES}")
        shapes = {np.asarray(v).shape[:2] for v in self.images.values()}
        if len(shapes) != 1:
            raise ShapeMismatch("cube faces must share dimensions")
        rows, cols = next(iter(shapes))
        if rows != cols:
            raise ShapeMismatch("cube faces must be square")
        if self.fov_deg <= 90.0:
            raise BadFov("cube faces need FOV > 90 degrees to cover the cylinder")

    @property
    def fov_deg(self) -> float:
        return 2.0 * math.degrees(math.atan((self.cam.width / 2.0) / self.cam.f))


def stitch_cubemap(faces: CubeFaceSet, out_cam: CylCamera):
    """Resample a cube map into a cylindrical panorama.

    Every output pixel casts its unit-cylinder ray, picks the face whose
    optical axis best aligns with it, and samples that face bilinearly.
    Planar face depth, when present, is converted to radial depth about the
    rig's vertical axis.  Returns (panorama, radial_depth or None).
    """
    theta, h = out_cam.grids()
    ray = np.stack([np.sin(theta), h, np.cos(theta)], axis=-1)
    ray_n = ray / np.linalg.norm(ray, axis=-1, keepdims=True)

    dots = np.stack([ray_n @ face_axis(n) for n in FACE_NAMES], axis=-1)
    owner = np.argmax(dots, axis=-1)

    pano = np.zeros((out_cam.height, out_cam.width, 3))
    depth = np.zeros((out_cam.height, out_cam.width)) if faces.depths else None
    covered = np.zeros((out_cam.height, out_cam.width), dtype=bool)

    for fi, name in enumerate(FACE_NAMES):
        mask = owner == fi
        if not mask.any():
            continue
        p_face = ray[mask] @ _FACE_ROTS[name].T
        u, v, in_front = pinhole_project(p_face, faces.cam)
        if not in_front.all():
            raise CoverageGap(f"ray behind face {name}")
        img = np.asarray(faces.images[name], dtype=np.float64)
        sample, valid = bilinear_sample_wrap(img, u[None, :], v[None, :], wrap=False)
        if not np.all(valid > 0):
            raise CoverageGap(f"ray outside face {name}")
        pano[mask] = sample[0]
        covered[mask] = True
        if depth is not None:
            dmap = np.asarray(faces.depths[name], dtype=np.float64)
            zs, _ = bilinear_sample_wrap(dmap, u[None, :], v[None, :], wrap=False)
            # Scale the face-frame ray to unit z, stretch by the planar depth,
            # then measure the radial distance back in the rig frame.
            pts_face = p_face / p_face[:, 2:3] * zs[0]
            pts_rig = pts_face @ _FACE_ROTS[name]
            depth[mask] = np.hypot(pts_rig[:, 0], pts_rig[:, 2])

    if not covered.all():
        raise CoverageGap("some rays project outside every face")
    return pano, depth


def equirect_to_cyl(img, out_cam: CylCamera) -> np.ndarray:
    """Warp a full-sphere equirectangular image onto the cylinder.

    The source covers azimuth [-pi, pi) across its width and elevation
    [-pi/2, pi/2] across its height (positive elevation points down, like
    +h).  Cylinder rows sample the source at elevation atan(h).
    """
    img = np.asarray(img, dtype=np.float64)
    rows, cols = img.shape[:2]
    theta, h = out_cam.grids()
    phi = np.arctan(h)
    u = (theta + math.pi) / (2.0 * math.pi) * cols - 0.5
    v = (phi + math.pi / 2.0) / math.pi * rows - 0.5
    out, _ = bilinear_sample_wrap(img, u, v, wrap=True)
    return out


def filter_static(poses, tau: float = 0.05) -> list:
    """Indices of frames that moved at least ``tau`` since the previous frame.

    Frame 0 is always kept; order is preserved.
    """
    kept = [0]
    for k in range(1, len(poses)):
        prev = poses[k - 1].t if isinstance(poses[k - 1], Pose6) else np.asarray(poses[k - 1])
        cur = poses[k].t if isinstance(poses[k], Pose6) else np.asarray(poses[k])
        if float(np.linalg.norm(cur - prev)) >= tau:
            kept.append(k)
    return kept


def crop_fov(pano, cam: CylCamera, fov_deg: float, center_azimuth: float = 0.0):
    """Cut the contiguous column band of the given angular width.

    The band is centered on ``center_azimuth`` and wraps across the seam when
    needed; the returned camera covers only that band and no longer wraps
    (unless fov_deg == 360).
    """
    if not 0.0 < fov_deg <= 360.0:
        raise BadFov(f"fov {fov_deg} outside (0, 360]")
    pano = np.asarray(pano, dtype=np.float64)
    if fov_deg == 360.0:
        return pano.copy(), cam
    w = cam.width
    band = int(round(w * fov_deg / 360.0))
    start = int(round((center_azimuth - cam.theta0) / cam.span * w - band / 2.0))
    cols = (start + np.arange(band)) % w
    cropped = pano[:, cols]
    new_cam = CylCamera(band, cam.height, cam.h_max,
                        theta0=cam.theta0 + cam.span * start / w,
                        span=cam.span * band / w)
    return cropped, new_cam


def resize_pano(img, out_h: int, out_w: int, wrap: bool = True) -> np.ndarray:
    """Area-averaging on integer downscale, wrap-aware bilinear otherwise."""
    img = np.asarray(img, dtype=np.float64)
    rows, cols = img.shape[:2]
    while rows % (2 * out_h) == 0 and cols % (2 * out_w) == 0:
        img = downsample_half(img)
        rows, cols = img.shape[:2]
    while rows * 2 <= out_h and cols * 2 <= out_w:
        img = upsample_double(img, wrap=wrap)
        rows, cols = img.shape[:2]
    if (rows, cols) != (out_h, out_w):
        ci = (np.arange(out_w) + 0.5) * cols / out_w - 0.5
        cj = (np.arange(out_h) + 0.5) * rows / out_h - 0.5
        grid_i = np.broadcast_to(ci, (out_h, out_w))
        grid_j = np.broadcast_to(cj[:, None], (out_h, out_w))
        img, _ = bilinear_sample_wrap(img, grid_i, grid_j, wrap=wrap)
    return img


@dataclass
class FrameRecord:
    color: str
    depth: str | None = None
    pose: Pose6 | None = None


@dataclass
class SequenceManifest:
    cam: CylCamera
    frames: list
    snippets: list                  # (tuple of frame indices, split tag)
    meta: dict = field(default_factory=dict)
    base_dir: str = "."

    def split(self, tag) -> list:
        return [s for s, t in self.snippets if t == tag]


def make_sequences(frames, fractions=(0.8, 0.1, 0.1), seed: int = 0,
                   cam: CylCamera | None = None) -> SequenceManifest:
    """Consecutive three-frame snippets with a seeded train/val/test split.

    Triples are shuffled deterministically and assigned by the given
    fractions; any test triple sharing a frame with a train triple is
    dropped so the test set never sees a training frame.
    """
    if len(frames) < 3:
        raise TooFewFrames(f"need at least 3 frames, got {len(frames)}")
    triples = [(k - 1, k, k + 1) for k in range(1, len(frames) - 1)]
    order = np.random.default_rng(seed).permutation(len(triples))
    n_train = int(round(fractions[0] * len(triples)))
    n_val = int(round(fractions[1] * len(triples)))

    assignments = []
    train_frames = set()
    for pos, idx in enumerate(order):
        tri = triples[idx]
        if pos < n_train:
            assignments.append((tri, "train"))
            train_frames.update(tri)
        elif pos < n_train + n_val:
            assignments.append((tri, "val"))
        else:
            assignments.append((tri, "test"))
    kept = [(tri, tag) for tri, tag in assignments
            if tag != "test" or not (set(tri) & train_frames)]
    kept.sort(key=lambda s: s[0][1])
    return SequenceManifest(cam, list(frames), kept)


def save_manifest(path, manifest: SequenceManifest) -> None:
    cam = manifest.cam
    with open(path, "w") as f:
        f.write("# cylsfm-manifest v1\n")
        f.write(f"camera width={cam.width} height={cam.height} "
                f"hmax={cam.h_max:.17g} theta0={cam.theta0:.17g} "
                f"span={cam.span:.17g}\n")
        for k, v in sorted(manifest.meta.items()):
            f.write(f"meta {k}={v}\n")
        for i, fr in enumerate(manifest.frames):
            line = f"frame idx={i} color={fr.color}"
            if fr.depth:
                line += f" depth={fr.depth}"
            if fr.pose is not None:
                line += " pose=" + ",".join(f"{v:.17g}" for v in fr.pose.to_vector())
            f.write(line + "\n")
        for tri, tag in manifest.snippets:
            f.write(f"snippet split={tag} frames={','.join(map(str, tri))}\n")


def load_manifest(path) -> SequenceManifest:
    cam = None
    frames = []
    snippets = []
    meta = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            kind, _, rest = line.partition(" ")
            fields = dict(p.split("=", 1) for p in rest.split(" ") if p)
            if kind == "camera":
                cam = CylCamera(int(fields["width"]), int(fields["height"]),
                                float(fields["hmax"]), float(fields["theta0"]),
                                float(fields["span"]))
            elif kind == "meta":
                meta.update(fields)
            elif kind == "frame":
                pose = None
                if "pose" in fields:
                    vec = np.array([float(v) for v in fields["pose"].split(",")])
                    pose = Pose6.from_vector(vec)
                frames.append(FrameRecord(fields["color"], fields.get("depth"), pose))
            elif kind == "snippet":
                tri = tuple(int(v) for v in fields["frames"].split(","))
                snippets.append((tri, fields["split"]))
            else:
                raise CylSfmError(f"unknown manifest record {kind!r}")
    if cam is None:
        raise CylSfmError("manifest has no camera record")
    return SequenceManifest(cam, frames, snippets, meta,
                            base_dir=os.path.dirname(os.path.abspath(path)))


def load_snippet(manifest: SequenceManifest, triple) -> Snippet:
    """Read one snippet's frames (middle frame is the target)."""
    tri = list(triple)
    target_pos = len(tri) // 2
    imgs = [read_ppm(os.path.join(manifest.base_dir,
                                  manifest.frames[i].color)) for i in tri]
    target_rec = manifest.frames[tri[target_pos]]
    gt_depth = None
    if target_rec.depth:
        gt_depth = read_pfm(os.path.join(manifest.base_dir, target_rec.depth))
    gt_poses = None
    if all(manifest.frames[i].pose is not None for i in tri):
        tgt = manifest.frames[tri[target_pos]].pose
        gt_poses = [relative_pose(tgt.t, manifest.frames[i].pose.t)
                    for j, i in enumerate(tri) if j != target_pos]
    return Snippet(imgs[target_pos],
                   [im for j, im in enumerate(imgs) if j != target_pos],
                   manifest.cam, gt_depth=gt_depth, gt_poses=gt_poses,
                   meta={"triple": tuple(tri)})


def load_split_snippets(manifest: SequenceManifest, tag) -> list:
    return [load_snippet(manifest, tri) for tri in manifest.split(tag)]
