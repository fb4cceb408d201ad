"""Analytically rendered textured-cylinder scenes.

The scene is a cylinder of fixed radius around the world's vertical axis,
painted with a smooth band-limited texture.  Views from any camera position
inside it have a closed form, which makes these scenes exact oracles for the
warping, estimation, stitching and rendering code: ground-truth depth and
pose are known, and a rendered view is correct by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .camera import CylCamera
from .snippet import Snippet, relative_pose


@dataclass
class CylinderScene:
    """Texture coefficients for a painted cylinder of the given radius."""

    radius: float = 5.0
    freqs: np.ndarray = None        # (n_waves,) integer azimuth frequencies
    y_freqs: np.ndarray = None      # (n_waves,) vertical frequencies
    amps: np.ndarray = None         # (n_waves, 3) per-channel amplitudes
    phases: np.ndarray = None       # (n_waves, 3)

    @staticmethod
    def make(radius: float = 5.0, seed: int = 0, n_waves: int = 6,
             max_freq: int = 8) -> "CylinderScene":
        rng = np.random.default_rng(seed)
        freqs = rng.integers(1, max_freq + 1, size=n_waves).astype(np.float64)
        y_freqs = rng.uniform(0.2, 2.0, size=n_waves)
        amps = rng.uniform(0.3, 1.0, size=(n_waves, 3))
        amps *= 0.42 / amps.sum(axis=0, keepdims=True)
        phases = rng.uniform(0.0, 2.0 * math.pi, size=(n_waves, 3))
        return CylinderScene(radius, freqs, y_freqs, amps, phases)

    def texture(self, theta, y):
        """Color of the cylinder surface at azimuth theta and height y."""
        theta = np.asarray(theta, dtype=np.float64)[..., None]
        y = np.asarray(y, dtype=np.float64)[..., None]
        arg = self.freqs * theta + self.y_freqs * y + self.phases[:, 0]
        out = np.empty(theta.shape[:-1] + (3,))
        for c in range(3):
            arg = self.freqs * theta + self.y_freqs * y + self.phases[:, c]
            out[..., c] = 0.5 + (self.amps[:, c] * np.sin(arg)).sum(axis=-1)
        return np.clip(out, 0.0, 1.0)


def render_panorama(scene: CylinderScene, cam: CylCamera, position):
    """Closed-form cylindrical view from ``position`` (world orientation).

    Returns (image, radial_depth).  The camera must sit strictly inside the
    cylinder.
    """
    p = np.asarray(position, dtype=np.float64).reshape(3)
    if math.hypot(p[0], p[2]) >= scene.radius * 0.95:
        raise ValueError("camera too close to the cylinder wall")
    theta, h = cam.grids()
    dx, dy, dz = np.sin(theta), h, np.cos(theta)
    # Ray-cylinder intersection; the horizontal direction norm is exactly 1,
    # so the positive root s is also the radial depth from the camera.
    b = 2.0 * (p[0] * dx + p[2] * dz)
    c = p[0] * p[0] + p[2] * p[2] - scene.radius * scene.radius
    s = 0.5 * (-b + np.sqrt(b * b - 4.0 * c))
    hit_x = p[0] + s * dx
    hit_y = p[1] + s * dy
    hit_z = p[2] + s * dz
    theta_w = np.arctan2(hit_x, hit_z)
    img = scene.texture(theta_w, hit_y)
    return img, s


def line_positions(n_frames: int, baseline: float, heading: float = 0.5,
                   start=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Camera centers marching along a straight horizontal line."""
    d = np.array([math.sin(heading), 0.0, math.cos(heading)])
    start = np.asarray(start, dtype=np.float64)
    k = np.arange(n_frames, dtype=np.float64) - (n_frames - 1) / 2.0
    return start + k[:, None] * baseline * d


def walk_positions(n_frames: int, baseline: float, seed: int = 0,
                   max_radius: float = 1.0) -> np.ndarray:
    """A bounded random walk with slowly turning heading, step ``baseline``."""
    rng = np.random.default_rng(seed)
    heading = rng.uniform(0.0, 2.0 * math.pi)
    pos = np.zeros(3)
    out = [pos.copy()]
    for _ in range(n_frames - 1):
        heading += rng.normal(0.0, 0.35)
        step = baseline * np.array([math.sin(heading), 0.0, math.cos(heading)])
        nxt = pos + step
        if math.hypot(nxt[0], nxt[2]) > max_radius:
            heading += math.pi  # turn back toward the center
            nxt = pos + baseline * np.array([math.sin(heading), 0.0, math.cos(heading)])
        pos = nxt
        out.append(pos.copy())
    return np.stack(out)


def make_snippet(scene: CylinderScene, cam: CylCamera, positions,
                 target_index: int = 1) -> Snippet:
    """Render a snippet with ground-truth depth and poses from camera centers."""
    positions = np.asarray(positions, dtype=np.float64)
    frames = [render_panorama(scene, cam, p) for p in positions]
    target_img, target_depth = frames[target_index]
    sources = [frames[i][0] for i in range(len(positions)) if i != target_index]
    gt_poses = [relative_pose(positions[target_index], positions[i])
                for i in range(len(positions)) if i != target_index]
    return Snippet(target_img, sources, cam, gt_depth=target_depth,
                   gt_poses=gt_poses,
                   meta={"positions": positions, "target_index": target_index})


def render_sequence(scene: CylinderScene, cam: CylCamera, positions):
    """Images and radial depth maps for a whole trajectory."""
    imgs, depths = [], []
    for p in np.asarray(positions, dtype=np.float64):
        img, dep = render_panorama(scene, cam, p)
        imgs.append(img)
        depths.append(dep)
    return imgs, depths
