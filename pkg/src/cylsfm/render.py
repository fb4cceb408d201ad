"""Panorama-to-mesh conversion and software rasterization.

A panorama plus its depth map becomes a dense triangle mesh (one vertex per
pixel, seam-closing quads between the last and first columns).  The
rasterizer renders the mesh from new viewpoints through either camera model
with a z-buffer and perspective-correct color interpolation; no shading is
applied, so the panorama's colors come through unmodified.  Stereo panoramas
are assembled column by column from eye positions on a viewing circle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .camera import CylCamera, PinholeCamera, cyl_unproject
from .errors import EyeInsideGeometry, NonPositiveDepth, ShapeMismatch
from .synthesis import Pose6, pose_to_transform

_NEAR = 1e-6


@dataclass
class Mesh:
    vertices: np.ndarray     # (N, 3) positions, scene units
    colors: np.ndarray       # (N, 3) in [0, 1]
    triangles: np.ndarray    # (M, 3) vertex indices


@dataclass
class StereoPair:
    left: np.ndarray
    right: np.ndarray
    radius: float

    def __post_init__(self):
        if self.left.shape != self.right.shape:
            raise ShapeMismatch("stereo halves must share dimensions")
        if self.radius < 0:
            raise ValueError("eye-circle radius must be non-negative")


def build_mesh(pano, depth, cam: CylCamera) -> Mesh:
    """One vertex per pixel at (d sin, d h, d cos), quads split into triangles.

    The last column connects back to column 0 so the mesh closes around the
    seam; triangle count is 2*W*(H-1).
    """
    pano = np.asarray(pano, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    if pano.shape[:2] != depth.shape:
        raise ShapeMismatch("panorama and depth disagree spatially")
    if np.any(depth <= 0):
        raise NonPositiveDepth("mesh depth must be positive everywhere")
    h_img, w_img = depth.shape
    theta, h = cam.grids()
    verts = cyl_unproject(theta, h, depth).reshape(-1, 3)
    colors = pano.reshape(-1, pano.shape[2]) if pano.ndim == 3 \
        else np.repeat(pano.reshape(-1, 1), 3, axis=1)

    j = np.arange(h_img - 1)
    i = np.arange(w_img)
    jj, ii = np.meshgrid(j, i, indexing="ij")
    v00 = jj * w_img + ii
    v01 = jj * w_img + (ii + 1) % w_img
    v10 = (jj + 1) * w_img + ii
    v11 = (jj + 1) * w_img + (ii + 1) % w_img
    tris = np.concatenate([
        np.stack([v00, v01, v10], axis=-1).reshape(-1, 3),
        np.stack([v01, v11, v10], axis=-1).reshape(-1, 3),
    ])
    return Mesh(verts, colors, tris)


def _rasterize(pts, depth_vals, colors, tris, height, width, wrap):
    """Z-buffered scanline fill over projected triangles.

    ``pts`` holds continuous (i, j) pixel coordinates per vertex; ``tris``
    indexes only triangles already deemed renderable.  Color is interpolated
    with perspective-correct weights (screen barycentrics divided by depth).
    """
    img = np.zeros((height, width, 3))
    zbuf = np.full((height, width), np.inf)
    covered = np.zeros((height, width), dtype=bool)

    for t in tris:
        p = pts[t]                      # (3, 2)
        z = depth_vals[t]
        col = colors[t]
        area = (p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1]) \
            - (p[2, 0] - p[0, 0]) * (p[1, 1] - p[0, 1])
        if abs(area) < 1e-12:
            continue
        i_lo = int(math.ceil(p[:, 0].min()))
        i_hi = int(math.floor(p[:, 0].max()))
        j_lo = max(int(math.ceil(p[:, 1].min())), 0)
        j_hi = min(int(math.floor(p[:, 1].max())), height - 1)
        if j_lo > j_hi or i_lo > i_hi:
            continue
        if not wrap:
            i_lo = max(i_lo, 0)
            i_hi = min(i_hi, width - 1)
            if i_lo > i_hi:
                continue

        ii = np.arange(i_lo, i_hi + 1, dtype=np.float64)
        jj = np.arange(j_lo, j_hi + 1, dtype=np.float64)
        gi, gj = np.meshgrid(ii, jj)
        w0 = ((p[1, 0] - gi) * (p[2, 1] - gj) - (p[2, 0] - gi) * (p[1, 1] - gj)) / area
        w1 = ((p[2, 0] - gi) * (p[0, 1] - gj) - (p[0, 0] - gi) * (p[2, 1] - gj)) / area
        w2 = 1.0 - w0 - w1
        inside = (w0 >= -1e-12) & (w1 >= -1e-12) & (w2 >= -1e-12)
        if not inside.any():
            continue

        inv_z = 1.0 / z
        denom = w0 * inv_z[0] + w1 * inv_z[1] + w2 * inv_z[2]
        z_pix = 1.0 / denom
        rows = gj.astype(np.int64)
        cols = gi.astype(np.int64) % width if wrap else gi.astype(np.int64)
        better = inside & (z_pix < zbuf[rows, cols])
        if not better.any():
            continue
        cw = np.stack([w0 * inv_z[0], w1 * inv_z[1], w2 * inv_z[2]], axis=-1) \
            / denom[..., None]
        shade = cw @ col
        r_sel, c_sel = rows[better], cols[better]
        zbuf[r_sel, c_sel] = z_pix[better]
        img[r_sel, c_sel] = shade[better]
        covered[r_sel, c_sel] = True
    return img, zbuf, covered


def _unroll_seam(icoords, tris, width):
    """Shift seam-crossing triangles into a contiguous column range.

    Vertices a crossing triangle reaches "from the left" get a duplicate at
    i + width; the rasterizer folds columns back with a modulo.  Returns the
    extended column coordinates, a source-vertex index for every (possibly
    duplicated) vertex, and the rewritten triangle list.
    """
    n = len(icoords)
    src = list(range(n))
    i_ext = list(icoords)
    i_tri = icoords[tris]
    crossing = (i_tri.max(axis=1) - i_tri.min(axis=1)) > width / 2.0
    if not crossing.any():
        return np.asarray(i_ext), np.arange(n), tris
    tris = tris.copy()
    remap = {}
    for m in np.nonzero(crossing)[0]:
        imax = i_tri[m].max()
        for k in range(3):
            if imax - i_tri[m][k] > width / 2.0:
                v = int(tris[m, k])
                if v not in remap:
                    remap[v] = len(i_ext)
                    i_ext.append(icoords[v] + width)
                    src.append(v)
                tris[m, k] = remap[v]
    return np.asarray(i_ext), np.asarray(src), tris


def render_view(mesh: Mesh, eye: Pose6, cam):
    """Render the mesh from a new viewpoint.

    ``eye`` maps world points into the eye frame (X_eye = R X + t).  Returns
    (image, depth_buffer, covered); background pixels stay flagged rather
    than receiving a guessed color.  Cylindrical cameras use radial depth and
    split seam-crossing triangles before scan conversion.
    """
    rot, t = pose_to_transform(eye)
    pts = mesh.vertices @ rot.T + t

    if isinstance(cam, PinholeCamera):
        z = pts[:, 2]
        renderable = z > _NEAR
        zs = np.where(renderable, z, 1.0)
        u = cam.f * pts[:, 0] / zs + cam.cx
        v = cam.f * pts[:, 1] / zs + cam.cy
        screen = np.stack([u, v], axis=-1)
        keep = renderable[mesh.triangles].all(axis=1)
        tris = mesh.triangles[keep]
        img, zbuf, covered = _rasterize(screen, zs, mesh.colors, tris,
                                        cam.height, cam.width, wrap=False)
        return img, zbuf, covered

    if not isinstance(cam, CylCamera):
        raise ShapeMismatch(f"unsupported camera type {type(cam)!r}")
    r = np.hypot(pts[:, 0], pts[:, 2])
    renderable = r > _NEAR
    r_safe = np.where(renderable, r, 1.0)
    # Azimuth measured from the camera's central direction, so the atan2
    # discontinuity sits at the antipode of the view instead of inside it.
    mid = cam.theta0 + cam.span / 2.0
    theta_rel = np.arctan2(pts[:, 0] * math.cos(mid) - pts[:, 2] * math.sin(mid),
                           pts[:, 0] * math.sin(mid) + pts[:, 2] * math.cos(mid))
    h = pts[:, 1] / r_safe
    icoords = (theta_rel + cam.span / 2.0) * cam.width / cam.span - 0.5
    jcoords = cam.row_of_h(h)
    keep = renderable[mesh.triangles].all(axis=1)
    tris = mesh.triangles[keep]
    if cam.wraps:
        icoords, src, tris = _unroll_seam(icoords, tris, cam.width)
    else:
        # A triangle straddling the antipodal seam lies behind the view of a
        # partial-span camera; dropping it keeps its huge wrapped column range
        # from sweeping across the image.
        t_tri = theta_rel[tris]
        tris = tris[(t_tri.max(axis=1) - t_tri.min(axis=1)) <= math.pi]
        src = np.arange(len(icoords))
    screen = np.stack([icoords, jcoords[src]], axis=-1)
    img, zbuf, covered = _rasterize(screen, r_safe[src], mesh.colors[src],
                                    tris, cam.height, cam.width, wrap=cam.wraps)
    return img, zbuf, covered


def render_ods(mesh: Mesh, radius: float, out_cam: CylCamera) -> StereoPair:
    """Omnidirectional stereo pair rendered one output column at a time.

    For output column c at azimuth theta_c the eye sits at +/- radius along
    the horizontal tangent (cos theta_c, 0, -sin theta_c) (plus for the right
    eye) looking along (sin theta_c, 0, cos theta_c); that eye renders only
    its own column.
    """
    min_r = float(np.hypot(mesh.vertices[:, 0], mesh.vertices[:, 2]).min())
    if radius >= min_r:
        raise EyeInsideGeometry(
            f"eye radius {radius} reaches geometry at radial distance {min_r}")

    h_img, w_img = out_cam.height, out_cam.width
    left = np.zeros((h_img, w_img, 3))
    right = np.zeros((h_img, w_img, 3))
    for c in range(w_img):
        theta_c = float(out_cam.theta_of_col(c))
        tangent = np.array([math.cos(theta_c), 0.0, -math.sin(theta_c)])
        col_cam = CylCamera(1, h_img, out_cam.h_max,
                            theta0=out_cam.theta0 + out_cam.span * c / w_img,
                            span=out_cam.span / w_img)
        for sign, buf in ((1.0, right), (-1.0, left)):
            eye = Pose6(t=-sign * radius * tangent)
            img, _, _ = render_view(mesh, eye, col_cam)
            buf[:, c] = img[:, 0]
    return StereoPair(left, right, radius)


def anaglyph(pair: StereoPair) -> np.ndarray:
    """Red channel from the left eye's luminance, cyan from the right's."""
    if pair.left.shape != pair.right.shape:
        raise ShapeMismatch("stereo halves must share dimensions")
    lum_l = pair.left.mean(axis=-1)
    lum_r = pair.right.mean(axis=-1)
    return np.stack([lum_l, lum_r, lum_r], axis=-1)


def write_ply(path, mesh: Mesh) -> None:
    """ASCII polygon export with per-vertex 8-bit color."""
    cols = np.clip(np.round(mesh.colors * 255.0), 0, 255).astype(int)
    with open(path, "w") as f:
        f.write("ply\nformat ascii 1.0\n")
        f.write(f"element vertex {len(mesh.vertices)}\n")
        f.write("property float x\nproperty float y\nproperty float z\n")
        f.write("property uchar red\nproperty uchar green\nproperty uchar blue\n")
        f.write(f"element face {len(mesh.triangles)}\n")
        f.write("property list uchar int vertex_indices\nend_header\n")
        for v, c in zip(mesh.vertices, cols):
            f.write(f"{v[0]:.9g} {v[1]:.9g} {v[2]:.9g} {c[0]} {c[1]} {c[2]}\n")
        for t in mesh.triangles:
            f.write(f"3 {t[0]} {t[1]} {t[2]}\n")
