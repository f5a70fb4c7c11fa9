"""Estimated data support as a union of epsilon-balls around the sample.

Membership, exact minimum distance, and nearest-class queries over the base
points, with a k-d tree index for moderate dimensions and a brute-force scan
otherwise (trees stop paying off in high dimension).  Membership and distance
are exactly consistent: contains(x) <=> distance(x) <= epsilon.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .dataio import PointCloud
from .errors import CheckpointError, EmptyDataError

_TREE_MAX_DIM = 8
_MAGIC = b"HGSP"
_VERSION = 1


@dataclass(frozen=True, eq=False)
class SupportEstimate:
    """Union of closed epsilon-balls around the base points."""

    base_points: PointCloud
    epsilon: float
    _tree: cKDTree | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self._tree is None and self.base_points.dim <= _TREE_MAX_DIM:
            object.__setattr__(self, "_tree", cKDTree(self.base_points.points))

    @property
    def dim(self) -> int:
        return self.base_points.dim

    @property
    def has_labels(self) -> bool:
        return self.base_points.labels is not None

    def _query(self, x):
        x = np.asarray(x, dtype=np.float64)
        scalar = x.ndim == 1
        xb = np.atleast_2d(x)
        if xb.shape[1] != self.dim:
            raise ValueError(f"query points must have dimension {self.dim}")
        if self._tree is not None:
            dist, idx = self._tree.query(xb, k=1)
        else:
            d2 = ((xb * xb).sum(axis=1)[:, None]
                  + (self.base_points.points ** 2).sum(axis=1)[None, :]
                  - 2.0 * xb @ self.base_points.points.T)
            idx = d2.argmin(axis=1)
            dist = np.sqrt(np.maximum(d2[np.arange(len(xb)), idx], 0.0))
        return dist, idx, scalar

    def distance(self, x):
        """Exact min distance to the base points (not to the ball union)."""
        dist, _, scalar = self._query(x)
        return float(dist[0]) if scalar else dist

    def nearest_index(self, x):
        dist, idx, scalar = self._query(x)
        return int(idx[0]) if scalar else idx

    def contains(self, x):
        dist, _, scalar = self._query(x)
        member = dist <= self.epsilon
        return bool(member[0]) if scalar else member

    def nearest_class(self, x):
        """Label of the class achieving the min distance; ties to lowest label."""
        if not self.has_labels:
            raise ValueError("support estimate carries no class labels")
        x = np.asarray(x, dtype=np.float64)
        scalar = x.ndim == 1
        xb = np.atleast_2d(x)
        pts = self.base_points.points
        labels = self.base_points.labels
        d2 = ((xb * xb).sum(axis=1)[:, None] + (pts * pts).sum(axis=1)[None, :]
              - 2.0 * xb @ pts.T)
        out = np.empty(xb.shape[0], dtype=np.int64)
        for i, row in enumerate(d2):
            best = row.min()
            cand = labels[row <= best + 1e-12 * max(1.0, best)]
            out[i] = cand.min()
        return int(out[0]) if scalar else out

    def class_support(self, label: int) -> "SupportEstimate":
        """Restriction to the base points of one class."""
        if not self.has_labels:
            raise ValueError("support estimate carries no class labels")
        sel = self.base_points.labels == label
        if not sel.any():
            raise ValueError(f"no points with label {label}")
        sub = PointCloud(self.base_points.points[sel],
                         self.base_points.weights[sel],
                         self.base_points.labels[sel])
        return SupportEstimate(sub, self.epsilon)

    def class_labels(self) -> np.ndarray:
        if not self.has_labels:
            raise ValueError("support estimate carries no class labels")
        return np.unique(self.base_points.labels)


def build(data: PointCloud, epsilon: float) -> SupportEstimate:
    """Devroye-Wise style estimate: union of epsilon-balls around the data."""
    if data.n == 0:
        raise EmptyDataError("cannot build a support estimate from no points")
    return SupportEstimate(data, float(epsilon))


def save(file, est: SupportEstimate):
    """Compact binary: magic, version, d, n, epsilon, points, labels."""
    file = Path(file)
    pts = np.ascontiguousarray(est.base_points.points, dtype="<f8")
    n, d = pts.shape
    has_labels = est.has_labels
    with open(file, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIIB", _VERSION, d, n, 1 if has_labels else 0))
        fh.write(struct.pack("<d", est.epsilon))
        fh.write(pts.tobytes())
        fh.write(np.ascontiguousarray(est.base_points.weights, dtype="<f8").tobytes())
        if has_labels:
            fh.write(np.ascontiguousarray(est.base_points.labels, dtype="<i4").tobytes())


def load(file) -> SupportEstimate:
    file = Path(file)
    raw = file.read_bytes()
    if raw[:4] != _MAGIC:
        raise CheckpointError(f"{file}: not a support-estimate file")
    version, d, n, has_labels = struct.unpack_from("<IIIB", raw, 4)
    if version != _VERSION:
        raise CheckpointError(f"{file}: unsupported version {version}")
    (epsilon,) = struct.unpack_from("<d", raw, 17)
    off = 25
    pts = np.frombuffer(raw, dtype="<f8", count=n * d, offset=off).reshape(n, d).copy()
    off += 8 * n * d
    weights = np.frombuffer(raw, dtype="<f8", count=n, offset=off).copy()
    off += 8 * n
    labels = None
    if has_labels:
        labels = np.frombuffer(raw, dtype="<i4", count=n, offset=off).astype(np.int64)
    return SupportEstimate(PointCloud(pts, weights, labels), epsilon)
