"""Camera models and projection math for cylindrical and pinhole images.

Coordinate conventions used throughout the package:

* Sensor frame: x points right, y points down, z points forward.
* Azimuth theta is measured around the y axis with theta = 0 at +z and
  theta = +pi/2 at +x, so theta = atan2(x, z).
* A cylindrical panorama column i (continuous, pixel centers at integer
  coordinates 0..W-1) sees azimuth theta(i) = theta0 + span*(i+0.5)/W, with
  theta0 = -pi and span = 2*pi for a full panorama.  Row j sees cylinder
  height h(j) = h_max*(2*(j+0.5)/H - 1); +h points down along +y.
* "Depth" d of a point is its radial distance to the cylinder axis,
  sqrt(x^2 + z^2), not the Euclidean distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateRay

EPS_RADIAL = 1e-9

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class CylCamera:
    """Cylindrical image geometry.

    ``h_max`` is the dimensionless half-height of the unit cylinder covered by
    the image; the default pi*H/W makes pixels square on the cylinder surface.
    ``theta0``/``span`` describe the azimuth band covered by the image; a full
    panorama covers [-pi, pi) and wraps horizontally.
    """

    width: int
    height: int
    h_max: float = 0.0
    theta0: float = -math.pi
    span: float = TWO_PI

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("camera dimensions must be positive")
        if self.h_max <= 0.0:
            object.__setattr__(self, "h_max", math.pi * self.height / self.width)
        if not (0.0 < self.span <= TWO_PI + 1e-12):
            raise ValueError("span must lie in (0, 2*pi]")

    @property
    def wraps(self) -> bool:
        """True when the image covers the full circle and wraps at the seam."""
        return abs(self.span - TWO_PI) < 1e-9

    def theta_of_col(self, i):
        """Azimuth seen by continuous column coordinate i."""
        i = np.asarray(i, dtype=np.float64)
        return self.theta0 + self.span * (i + 0.5) / self.width

    def h_of_row(self, j):
        """Cylinder height seen by continuous row coordinate j."""
        j = np.asarray(j, dtype=np.float64)
        return self.h_max * (2.0 * (j + 0.5) / self.height - 1.0)

    def col_of_theta(self, theta):
        """Continuous column for azimuth theta (wrapped into the span)."""
        theta = np.asarray(theta, dtype=np.float64)
        if self.wraps:
            theta = wrap_angle(theta)
        return (theta - self.theta0) * self.width / self.span - 0.5

    def row_of_h(self, h):
        h = np.asarray(h, dtype=np.float64)
        return (h / self.h_max + 1.0) * self.height / 2.0 - 0.5

    def grids(self):
        """Per-pixel (theta, h) arrays of shape (H, W)."""
        theta = self.theta_of_col(np.arange(self.width))
        h = self.h_of_row(np.arange(self.height))
        return np.broadcast_to(theta, (self.height, self.width)).copy(), \
            np.broadcast_to(h[:, None], (self.height, self.width)).copy()


@dataclass(frozen=True)
class PinholeCamera:
    """Classic pinhole model: u = f*x/z + cx, v = f*y/z + cy."""

    f: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.f <= 0:
            raise ValueError("focal length must be positive")

    @staticmethod
    def from_fov(fov_deg: float, width: int, height: int) -> "PinholeCamera":
        """Camera whose horizontal FOV across the image width is ``fov_deg``."""
        f = (width / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
        return PinholeCamera(f, (width - 1) / 2.0, (height - 1) / 2.0, width, height)


class CylCoord(NamedTuple):
    """Cylindrical image-surface coordinates of a 3D point."""

    theta: np.ndarray
    h: np.ndarray
    d: np.ndarray


def wrap_angle(theta):
    """Wrap angles into [-pi, pi)."""
    return (np.asarray(theta, dtype=np.float64) + math.pi) % TWO_PI - math.pi


def cyl_project(p) -> CylCoord:
    """Project sensor-frame points (..., 3) onto the unit cylinder.

    Returns (theta, h, d) with theta = atan2(x, z), h = y/d and the radial
    depth d = sqrt(x^2 + z^2).  Raises DegenerateRay if any point lies within
    EPS_RADIAL of the cylinder axis, where the azimuth is undefined.
    """
    p = np.asarray(p, dtype=np.float64)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    d = np.hypot(x, z)
    if np.any(d <= EPS_RADIAL):
        raise DegenerateRay("point lies on the cylinder axis")
    theta = np.arctan2(x, z)
    return CylCoord(theta, y / d, d)


def cyl_unproject(theta, h, d) -> np.ndarray:
    """Inverse of cyl_project: (d*sin(theta), d*h, d*cos(theta)) as (..., 3)."""
    theta = np.asarray(theta, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if np.any(d <= 0):
        raise ValueError("radial depth must be positive")
    return np.stack([d * np.sin(theta), d * h, d * np.cos(theta)], axis=-1)


def pix_to_cyl(i, j, cam: CylCamera):
    """Continuous pixel coordinates -> (theta, h)."""
    return cam.theta_of_col(i), cam.h_of_row(j)


def cyl_to_pix(theta, h, cam: CylCamera):
    """(theta, h) -> continuous pixel coordinates plus a vertical bounds flag.

    For a wrapping camera the column lands in [-0.5, W-0.5); the row is
    returned unclamped and ``in_bounds`` reports whether it falls strictly
    inside the image's vertical extent.
    """
    i = cam.col_of_theta(theta)
    j = cam.row_of_h(h)
    in_bounds = (j > -0.5) & (j < cam.height - 0.5)
    return i, j, in_bounds


def pinhole_project(p, cam: PinholeCamera):
    """Project sensor-frame points; in_front flags z > 0 instead of failing."""
    p = np.asarray(p, dtype=np.float64)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    in_front = z > 0
    zs = np.where(in_front, z, 1.0)  # keep the division finite behind the camera
    u = cam.f * x / zs + cam.cx
    v = cam.f * y / zs + cam.cy
    return u, v, in_front


def pinhole_unproject(u, v, z, cam: PinholeCamera) -> np.ndarray:
    """Pixel coordinates plus depth along the optical axis -> sensor points."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    x = (u - cam.cx) * z / cam.f
    y = (v - cam.cy) * z / cam.f
    return np.stack([x, y, np.broadcast_to(z, x.shape).copy()], axis=-1)
