"""TUM-format trajectory parsing, timestamp association, rigid alignment, RMS-ATE.

Trajectories are text files with lines `timestamp tx ty tz qx qy qz qw` and
`#` comments. The error metric is translational: estimated positions are
rigidly aligned to ground truth by least squares (no scale) and the RMSE of
the residuals is reported in meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class TrajectoryFormatError(ValueError):
    """Raised for malformed trajectory files."""


class AssociationError(ValueError):
    """Raised when timestamp association yields no pairs."""


class DegenerateGeometryError(ValueError):
    """Raised when rigid alignment is ill-posed (collinear or identical points)."""


@dataclass(frozen=True)
class TrajectoryPose:
    """Timestamped rigid pose: translation in meters, unit quaternion (x, y, z, w)."""

    timestamp: float
    t: np.ndarray
    q: np.ndarray


@dataclass(frozen=True)
class AlignedPair:
    est: TrajectoryPose
    gt: TrajectoryPose
    gap: float


def parse_trajectory(source: str | Path) -> list[TrajectoryPose]:
    """Parse a TUM trajectory file, sorted by timestamp, quaternions normalized."""
    poses: list[TrajectoryPose] = []
    with open(source, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            fields = stripped.split()
            if len(fields) != 8:
                raise TrajectoryFormatError(
                    f"{source}:{lineno}: expected 8 fields, got {len(fields)}"
                )
            try:
                values = [float(v) for v in fields]
            except ValueError as e:
                raise TrajectoryFormatError(f"{source}:{lineno}: {e}") from e
            if not all(math.isfinite(v) for v in values):
                raise TrajectoryFormatError(f"{source}:{lineno}: non-finite value")
            q = np.array(values[4:8], dtype=np.float64)
            norm = np.linalg.norm(q)
            if norm == 0.0:
                raise TrajectoryFormatError(f"{source}:{lineno}: zero quaternion")
            poses.append(
                TrajectoryPose(
                    timestamp=values[0],
                    t=np.array(values[1:4], dtype=np.float64),
                    q=q / norm,
                )
            )
    poses.sort(key=lambda p: p.timestamp)
    return poses


def associate(
    est: list[TrajectoryPose],
    gt: list[TrajectoryPose],
    max_diff: float = 0.02,
) -> list[AlignedPair]:
    """Greedily pair poses by minimal timestamp gap within `max_diff` seconds.

    Candidate pairs are sorted by gap and consumed greedily, each pose used at
    most once. Raises AssociationError when nothing pairs up.
    """
    if not est or not gt:
        raise AssociationError("both trajectories must be non-empty")
    gt_times = np.array([p.timestamp for p in gt])
    candidates: list[tuple[float, int, int]] = []
    for i, ep in enumerate(est):
        lo = int(np.searchsorted(gt_times, ep.timestamp - max_diff, side="left"))
        hi = int(np.searchsorted(gt_times, ep.timestamp + max_diff, side="right"))
        for j in range(lo, hi):
            gap = abs(ep.timestamp - gt_times[j])
            if gap <= max_diff:
                candidates.append((gap, i, j))
    candidates.sort()
    used_est: set[int] = set()
    used_gt: set[int] = set()
    pairs: list[AlignedPair] = []
    for gap, i, j in candidates:
        if i in used_est or j in used_gt:
            continue
        used_est.add(i)
        used_gt.add(j)
        pairs.append(AlignedPair(est=est[i], gt=gt[j], gap=gap))
    if not pairs:
        raise AssociationError(f"no pose pairs within {max_diff} s")
    pairs.sort(key=lambda p: p.est.timestamp)
    return pairs


def rigid_align(src, dst) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares rigid transform (R, t) minimizing sum ||R src_i + t - dst_i||^2.

    Centroid subtraction, 3x3 cross-covariance, SVD with a determinant sign
    fix so R is a proper rotation. No scale estimation.
    """
    a = np.asarray(src, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(dst, dtype=np.float64).reshape(-1, 3)
    if a.shape != b.shape:
        raise ValueError(f"point sets differ in size: {a.shape} vs {b.shape}")
    if a.shape[0] < 3:
        raise ValueError("rigid alignment needs at least 3 point pairs")
    ca = a.mean(axis=0)
    cb = b.mean(axis=0)
    h = (a - ca).T @ (b - cb)
    u, s, vt = np.linalg.svd(h)
    if s[0] == 0.0 or s[1] <= 1e-12 * s[0]:
        raise DegenerateGeometryError("points are collinear or coincident; rotation is ill-posed")
    v = vt.T
    d = np.sign(np.linalg.det(v @ u.T))
    r = v @ np.diag([1.0, 1.0, d]) @ u.T
    t = cb - r @ ca
    return r, t


def alignment_residuals(pairs: list[AlignedPair], aligned: bool = True) -> np.ndarray:
    """Per-pair translational error in meters, after optional rigid alignment."""
    est = np.array([p.est.t for p in pairs])
    gt = np.array([p.gt.t for p in pairs])
    if aligned:
        if len(pairs) < 3:
            raise ValueError("aligned mode needs at least 3 pairs")
        r, t = rigid_align(est, gt)
        est = est @ r.T + t
    return np.linalg.norm(est - gt, axis=1)


def ate_rmse(pairs: list[AlignedPair], aligned: bool = True) -> float:
    """Root mean square absolute trajectory error in meters."""
    residuals = alignment_residuals(pairs, aligned=aligned)
    return float(np.sqrt(np.mean(residuals**2)))
