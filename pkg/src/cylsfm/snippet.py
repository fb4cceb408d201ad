"""The unit of estimation: one target frame plus its neighboring sources."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import CylCamera
from .errors import ShapeMismatch
from .synthesis import Pose6

# Frames closer than this mean absolute difference are considered static.
STATIC_EPS = 1e-4


@dataclass
class Snippet:
    target: np.ndarray
    sources: list
    cam: CylCamera
    gt_depth: np.ndarray | None = None
    gt_poses: list | None = None           # Pose6 per source, evaluation only
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=np.float64)
        self.sources = [np.asarray(s, dtype=np.float64) for s in self.sources]
        if not self.sources:
            raise ShapeMismatch("snippet needs at least one source frame")
        for s in self.sources:
            if s.shape != self.target.shape:
                raise ShapeMismatch("snippet frames must share dimensions")
        if self.target.shape[:2] != (self.cam.height, self.cam.width):
            raise ShapeMismatch("camera does not match frame dimensions")

    def is_static(self) -> bool:
        """True when every source is photometrically identical to the target."""
        return all(float(np.mean(np.abs(s - self.target))) < STATIC_EPS
                   for s in self.sources)

    @property
    def n_sources(self) -> int:
        return len(self.sources)


def relative_pose(target_pos, source_pos) -> Pose6:
    """Pose of a source camera relative to the target, axis-aligned cameras.

    With both cameras keeping the world orientation, X_source = X_target + t
    where t = target_pos - source_pos.
    """
    t = np.asarray(target_pos, dtype=np.float64) - np.asarray(source_pos, dtype=np.float64)
    return Pose6(t=t)
