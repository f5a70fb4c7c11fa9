"""Point-cloud datasets and their CSV representation.

Dataset CSV contract: header row ``x0,...,x{d-1}[,label]``, 64-bit float
coordinates, optional integer class labels.  Weights are not part of the file
format; clouds loaded from CSV carry uniform weights.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyDataError


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Weighted points with optional class labels."""

    points: np.ndarray          # (n, d)
    weights: np.ndarray         # (n,) positive
    labels: np.ndarray | None = None  # (n,) int

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise EmptyDataError("point cloud must be a non-empty (n, d) array")
        object.__setattr__(self, "points", pts)
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (pts.shape[0],) or (w <= 0).any():
            raise ValueError("weights must be positive with one entry per point")
        object.__setattr__(self, "weights", w)
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int64)
            if lab.shape != (pts.shape[0],):
                raise ValueError("labels must have one entry per point")
            object.__setattr__(self, "labels", lab)

    @classmethod
    def from_points(cls, points, weights=None, labels=None) -> "PointCloud":
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[None, :]
        if weights is None:
            weights = np.full(pts.shape[0], 1.0 / max(pts.shape[0], 1))
        return cls(pts, np.asarray(weights, dtype=np.float64), labels)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def class_indices(self) -> dict[int, np.ndarray]:
        """Map label -> indices of the points carrying it."""
        if self.labels is None:
            raise ValueError("point cloud carries no labels")
        return {int(lab): np.flatnonzero(self.labels == lab)
                for lab in np.unique(self.labels)}


def save_dataset(path, cloud: PointCloud):
    path = Path(path)
    cols = [f"x{i}" for i in range(cloud.dim)]
    data = cloud.points
    fmt = ["%.17g"] * cloud.dim
    if cloud.labels is not None:
        cols.append("label")
        data = np.column_stack([cloud.points, cloud.labels.astype(np.float64)])
        fmt.append("%d")
    np.savetxt(path, data, delimiter=",", header=",".join(cols), comments="", fmt=fmt)


def load_dataset(path) -> PointCloud:
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip()
    cols = header.split(",")
    has_labels = cols and cols[-1].strip().lower() == "label"
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if raw.shape[0] == 0:
        raise EmptyDataError(f"no rows in dataset {path}")
    dim = len(cols) - (1 if has_labels else 0)
    if raw.shape[1] != len(cols):
        raise ValueError(f"{path}: {raw.shape[1]} columns, header names {len(cols)}")
    labels = raw[:, -1].astype(np.int64) if has_labels else None
    return PointCloud.from_points(raw[:, :dim], labels=labels)
