import math

import numpy as np
import pytest

from cylsfm.camera import (CylCamera, PinholeCamera, cyl_project, cyl_to_pix,
                           cyl_unproject, pinhole_project, pinhole_unproject,
                           pix_to_cyl, wrap_angle)
from cylsfm.errors import DegenerateRay


def test_project_axes():
    q = cyl_project(np.array([0.0, 0.0, 1.0]))
    assert q.theta == 0.0 and q.h == 0.0 and q.d == 1.0
    q = cyl_project(np.array([1.0, 0.0, 0.0]))
    assert q.theta == pytest.approx(math.pi / 2) and q.d == 1.0


def test_project_hand_value():
    # radial distance sqrt(9 + 16) = 5, so h = 4/5
    q = cyl_project(np.array([3.0, 4.0, 4.0]))
    assert q.theta == pytest.approx(math.atan2(3.0, 4.0), abs=1e-12)
    assert q.h == pytest.approx(0.8)
    assert q.d == pytest.approx(5.0)


def test_unproject_values():
    assert np.allclose(cyl_unproject(0.0, 0.0, 1.0), [0, 0, 1])
    assert np.allclose(cyl_unproject(math.pi / 2, 0.0, 2.0), [2, 0, 0])
    assert np.allclose(cyl_unproject(0.6435011087932844, 0.8, 5.0), [3, 4, 4])


def test_degenerate_axis():
    with pytest.raises(DegenerateRay):
        cyl_project(np.array([0.0, 3.0, 0.0]))
    with pytest.raises(DegenerateRay):
        cyl_project(np.array([1e-12, 0.0, 1e-12]))


def test_roundtrip_random(rng):
    theta = rng.uniform(-math.pi, math.pi, 10_000)
    h = rng.uniform(-2.0, 2.0, 10_000)
    d = rng.uniform(0.1, 100.0, 10_000)
    pts = cyl_unproject(theta, h, d)
    q = cyl_project(pts)
    back = cyl_unproject(q.theta, q.h, q.d)
    err = np.linalg.norm(back - pts, axis=-1)
    assert np.all(err < 1e-9 * np.linalg.norm(pts, axis=-1))


def test_yaw_equivariance(rng):
    pts = cyl_unproject(rng.uniform(-3, 3, 500), rng.uniform(-1, 1, 500),
                        rng.uniform(0.5, 50, 500))
    delta = 0.7321
    rot = np.array([[math.cos(delta), 0, math.sin(delta)],
                    [0, 1, 0],
                    [-math.sin(delta), 0, math.cos(delta)]])
    q0 = cyl_project(pts)
    q1 = cyl_project(pts @ rot.T)
    dtheta = wrap_angle(q1.theta - q0.theta - delta)
    assert np.abs(dtheta).max() < 1e-12
    assert np.abs(q1.h - q0.h).max() < 1e-12
    assert np.abs(q1.d - q0.d).max() < 1e-12


def test_h_is_tan_elevation(rng):
    pts = rng.standard_normal((200, 3)) * np.array([3, 2, 3]) + np.array([0, 0, 4])
    pts = pts[np.hypot(pts[:, 0], pts[:, 2]) > 0.1]
    q = cyl_project(pts)
    elev = np.arctan2(pts[:, 1], np.hypot(pts[:, 0], pts[:, 2]))
    assert np.allclose(q.h, np.tan(elev), atol=1e-12)


def test_pixel_grid_examples():
    cam = CylCamera(512, 128, math.pi / 4)
    theta, h = pix_to_cyl(255.5, 63.5, cam)
    assert theta == 0.0 and h == 0.0
    # column 0 sits half a pixel right of the seam
    theta, h = pix_to_cyl(0.0, 63.5, cam)
    assert theta == pytest.approx(2 * math.pi * 0.5 / 512 - math.pi, abs=1e-12)
    assert h == 0.0
    # one full width of columns spans exactly one turn
    t0, _ = pix_to_cyl(17.25, 0.0, cam)
    t1, _ = pix_to_cyl(17.25 + 512.0, 0.0, cam)
    assert t1 - t0 == pytest.approx(2 * math.pi, abs=1e-12)


def test_cyl_to_pix_boundary():
    cam = CylCamera(512, 128, math.pi / 4)
    i, j, ok = cyl_to_pix(-math.pi, -math.pi / 4, cam)
    # the seam lands half a pixel left of column 0, equivalently at 511.5
    assert -0.5 <= i < 511.5
    assert (i + 0.5) % 512 == pytest.approx(0.0, abs=1e-12)
    assert j == pytest.approx(-0.5)
    assert not ok  # exactly on the top edge counts as out of bounds


def test_pix_cyl_mutual_inverse(rng):
    cam = CylCamera(512, 128, math.pi / 4)
    i = rng.uniform(-0.5, 511.5 - 1e-9, 1000)
    j = rng.uniform(-10, 140, 1000)
    theta, h = pix_to_cyl(i, j, cam)
    i2, j2, _ = cyl_to_pix(theta, h, cam)
    assert np.abs(i2 - i).max() < 1e-10
    assert np.abs(j2 - j).max() < 1e-10


def test_default_square_pixels():
    cam = CylCamera(512, 128)
    assert cam.h_max == pytest.approx(math.pi * 128 / 512)


def test_pinhole_examples():
    cam = PinholeCamera(100.0, 64.0, 64.0, 128, 128)
    u, v, ok = pinhole_project(np.array([0.0, 0.0, 5.0]), cam)
    assert (u, v, ok) == (64.0, 64.0, True)
    cam0 = PinholeCamera(100.0, 0.0, 0.0, 128, 128)
    u, v, ok = pinhole_project(np.array([1.0, 0.0, 2.0]), cam0)
    assert u == pytest.approx(50.0) and v == 0.0 and ok
    _, _, ok = pinhole_project(np.array([0.0, 0.0, -1.0]), cam)
    assert not ok


def test_pinhole_roundtrip(rng):
    cam = PinholeCamera(80.0, 31.5, 15.5, 64, 32)
    pts = np.stack([rng.uniform(-2, 2, 300), rng.uniform(-1, 1, 300),
                    rng.uniform(0.5, 20, 300)], axis=-1)
    u, v, ok = pinhole_project(pts, cam)
    assert ok.all()
    back = pinhole_unproject(u, v, pts[:, 2], cam)
    assert np.abs(back - pts).max() < 1e-10
