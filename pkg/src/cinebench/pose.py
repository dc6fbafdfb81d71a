"""2D keypoint alignment and the anti-copy-paste pose-diversity score.

Pose similarity is the cosine between two keypoint sets after removing
translation, uniform scale, and proper rotation (reflections are *not*
allowed: a mirrored person is a different pose).  The diversity score of a
generated clip against its reference is ``1 - mean(sim)`` over usable
frames, so identical poses score 0 and maximally dissimilar ones approach 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, MetricError

DEFAULT_VIS_MIN = 0.3
_MIN_SHARED_JOINTS = 3


@dataclass(frozen=True)
class KeypointSet:
    """J 2D points with per-joint visibility confidences in [0, 1]."""

    points: np.ndarray     # [J, 2]
    visibility: np.ndarray  # [J]

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        vis = np.asarray(self.visibility, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"points must be [J, 2], got {pts.shape}")
        if vis.shape != (pts.shape[0],):
            raise ValueError("visibility must have one entry per joint")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "visibility", vis)

    @classmethod
    def from_tensor_frame(cls, frame: np.ndarray) -> "KeypointSet":
        """Build from one [J, 3] row of a bundle's keypoints tensor."""
        frame = np.asarray(frame, dtype=np.float64)
        return cls(points=frame[:, :2], visibility=frame[:, 2])


def _shared_normalized(p: KeypointSet, q: KeypointSet,
                       vis_min: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, float, float]:
    """Select mutually visible joints; center and scale both to unit norm.

    Returns (p_hat, q_hat, p_centroid, p_scale, shared_mask) — everything
    needed to fit the rotation and map the result back into P's frame.
    """
    if p.points.shape[0] != q.points.shape[0]:
        raise ValueError("keypoint sets must have the same joint count")
    shared = (p.visibility >= vis_min) & (q.visibility >= vis_min)
    if int(shared.sum()) < _MIN_SHARED_JOINTS:
        raise DegenerateError(
            f"only {int(shared.sum())} shared visible joints (need >= {_MIN_SHARED_JOINTS})")
    ps = p.points[shared]
    qs = q.points[shared]
    p_mean = ps.mean(axis=0)
    q_mean = qs.mean(axis=0)
    pc = ps - p_mean
    qc = qs - q_mean
    p_scale = float(np.linalg.norm(pc))
    q_scale = float(np.linalg.norm(qc))
    if p_scale == 0.0 or q_scale == 0.0:
        raise DegenerateError("zero spatial extent after centering")
    return pc / p_scale, qc / q_scale, p_mean, p_scale, shared


def _best_proper_rotation(p_hat: np.ndarray, q_hat: np.ndarray) -> np.ndarray:
    """Rotation R (det=+1) maximizing <p_hat, q_hat @ R>."""
    m = q_hat.T @ p_hat
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, d]) @ vt


def procrustes_align(p: KeypointSet, q: KeypointSet,
                     vis_min: float = DEFAULT_VIS_MIN) -> tuple[KeypointSet, float]:
    """Fit translation + uniform scale + proper rotation of Q onto P.

    The transform is fitted on mutually visible joints and applied to all of
    Q's joints; the aligned set lives in P's original frame, so ``Q == P``
    returns P itself with zero residual.  The residual is the sum of squared
    distances between P and aligned Q over the shared joints.
    """
    p_hat, q_hat, p_mean, p_scale, shared = _shared_normalized(p, q, vis_min)
    rot = _best_proper_rotation(p_hat, q_hat)
    # Least-squares optimal scale: correlation of the unit shapes times the
    # ratio of spatial extents.
    corr = float(np.sum(p_hat * (q_hat @ rot)))

    qs = q.points[shared]
    q_mean = qs.mean(axis=0)
    q_scale = float(np.linalg.norm(qs - q_mean))
    scale = corr * p_scale / q_scale

    aligned_pts = ((q.points - q_mean) * scale) @ rot + p_mean
    aligned = KeypointSet(points=aligned_pts, visibility=q.visibility.copy())

    residual = float(np.sum((p.points[shared] - aligned_pts[shared]) ** 2))
    return aligned, residual


def sim_pose(p: KeypointSet, q: KeypointSet, vis_min: float = DEFAULT_VIS_MIN) -> float:
    """Cosine of centered, unit-normalized P against optimally rotated Q.

    1.0 iff the shared joints are similarity-equivalent shapes; invariant to
    translation, positive scaling, and rotation of either argument.
    """
    p_hat, q_hat, _, _, _ = _shared_normalized(p, q, vis_min)
    rot = _best_proper_rotation(p_hat, q_hat)
    return float(np.clip(np.sum(p_hat * (q_hat @ rot)), -1.0, 1.0))


def frame_pose_sims(ref: KeypointSet, frames: list[KeypointSet],
                    vis_min: float = DEFAULT_VIS_MIN) -> list[float | None]:
    """Per-frame pose similarity to the reference; None marks degenerate frames."""
    sims: list[float | None] = []
    for frame in frames:
        try:
            sims.append(sim_pose(ref, frame, vis_min))
        except DegenerateError:
            sims.append(None)
    return sims


def acp_var(ref: KeypointSet, frames: list[KeypointSet],
            vis_min: float = DEFAULT_VIS_MIN) -> float:
    """Pose-diversity score: 1 minus the mean reference similarity.

    Degenerate frames are skipped; raises NO_USABLE_FRAMES when none remain.
    Output lies in [0, 2]; 0 means every usable frame matches the reference
    pose up to a similarity transform.
    """
    if not frames:
        raise MetricError("NO_USABLE_FRAMES", "no frames supplied")
    usable = [s for s in frame_pose_sims(ref, frames, vis_min) if s is not None]
    if not usable:
        raise MetricError("NO_USABLE_FRAMES", "all frames degenerate")
    return 1.0 - float(np.mean(usable))
