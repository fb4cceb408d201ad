"""Depth accuracy metrics and snippet trajectory error."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyMask, LengthMismatch, NonPositiveDepth, ShapeMismatch


@dataclass
class DepthMetrics:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    d1: float
    d2: float
    d3: float

    def as_dict(self) -> dict:
        return {"abs_rel": self.abs_rel, "sq_rel": self.sq_rel,
                "rmse": self.rmse, "rmse_log": self.rmse_log,
                "d1": self.d1, "d2": self.d2, "d3": self.d3}

    def row(self) -> tuple:
        return (self.abs_rel, self.sq_rel, self.rmse, self.rmse_log,
                self.d1, self.d2, self.d3)


def depth_metrics(pred, gt, mask=None, median_scale: bool = True,
                  d_min: float = 0.1, d_max: float = 100.0) -> DepthMetrics:
    """Standard monocular-depth error and accuracy numbers.

    ``mask`` defaults to gt within [d_min, d_max].  With ``median_scale`` the
    prediction is rescaled by median(gt)/median(pred) first, the usual
    treatment for scale-ambiguous monocular predictions.  The delta metrics
    use a strict inequality: a ratio of exactly 1.25 does not count.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs gt {gt.shape}")
    if mask is None:
        mask = (gt >= d_min) & (gt <= d_max)
    else:
        mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyMask("no valid pixel for depth evaluation")
    p = pred[mask]
    g = gt[mask]
    if np.any(g <= 0):
        raise NonPositiveDepth("ground-truth depth must be positive on the mask")
    if np.any(p <= 0):
        raise NonPositiveDepth("predicted depth must be positive on the mask")
    if median_scale:
        p = p * (np.median(g) / np.median(p))

    ratio = np.maximum(p / g, g / p)
    diff = p - g
    return DepthMetrics(
        abs_rel=float(np.mean(np.abs(diff) / g)),
        sq_rel=float(np.mean(diff * diff / g)),
        rmse=float(np.sqrt(np.mean(diff * diff))),
        rmse_log=float(np.sqrt(np.mean((np.log(p) - np.log(g)) ** 2))),
        d1=float(np.mean(ratio < 1.25)),
        d2=float(np.mean(ratio < 1.25 ** 2)),
        d3=float(np.mean(ratio < 1.25 ** 3)),
    )


@dataclass
class AteReport:
    mean: float
    std: float
    count: int

    def as_dict(self) -> dict:
        return {"ate_mean": self.mean, "ate_std": self.std,
                "snippets": float(self.count)}


def snippet_ate(pred_positions, gt_positions) -> float:
    """Trajectory error of one snippet after anchoring and scale alignment.

    Both position lists are translated so their first frame sits at the
    origin, then the closed-form least-squares scale s = <p,g>/<p,p> aligns
    the prediction (s = 0 when the prediction never moves).  The error is the
    mean distance over frames.
    """
    p = np.asarray(pred_positions, dtype=np.float64)
    g = np.asarray(gt_positions, dtype=np.float64)
    if p.shape != g.shape:
        raise LengthMismatch(f"positions {p.shape} vs {g.shape}")
    p = p - p[0]
    g = g - g[0]
    denom = float(np.sum(p * p))
    s = float(np.sum(p * g)) / denom if denom > 0 else 0.0
    return float(np.mean(np.linalg.norm(s * p - g, axis=-1)))


def ate(pred_snippets, gt_snippets) -> AteReport:
    """Mean and standard deviation of the per-snippet trajectory error."""
    if len(pred_snippets) != len(gt_snippets):
        raise LengthMismatch(
            f"{len(pred_snippets)} predicted vs {len(gt_snippets)} gt snippets")
    errors = [snippet_ate(p, g) for p, g in zip(pred_snippets, gt_snippets)]
    arr = np.array(errors)
    return AteReport(float(arr.mean()), float(arr.std()), len(arr))


def positions_from_relative_poses(poses, target_index: int = 1) -> np.ndarray:
    """Camera centers of a snippet given each source's pose in the target frame.

    A source camera's center expressed in target coordinates is -R^T t; the
    target itself sits at the origin.  Frames come back in temporal order.
    """
    from .synthesis import pose_to_transform
    centers = []
    for pose in poses:
        rot, t = pose_to_transform(pose)
        centers.append(-rot.T @ t)
    centers.insert(target_index, np.zeros(3))
    return np.stack(centers)
