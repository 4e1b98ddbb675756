# File: skelfit/metrics/voxel.py
"""
Occupancy grids from triangle meshes and the volumetric IoU built on them.

A cell is occupied when its center is inside the mesh by majority vote of three ray-parity
tests, one along each axis. Ray origins are offset by a tiny irrational fraction of a cell so
rays never graze shared triangle edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from ..exception import InvalidInputException

_JITTER = (math.sqrt(2.0) * 1e-6, math.sqrt(3.0) * 1e-6, math.sqrt(5.0) * 1e-6)


@dataclass(frozen=True)
class VoxelGrid:
    lo: Tuple[float, float, float]
    hi: Tuple[float, float, float]
    resolution: Tuple[int, int, int]
    occupancy: np.ndarray  # bool (Rx, Ry, Rz)

    @property
    def cell_size(self) -> np.ndarray:
        return (np.asarray(self.hi) - np.asarray(self.lo)) / np.asarray(self.resolution)

    def centers(self, axis: int) -> np.ndarray:
        return self.lo[axis] + (np.arange(self.resolution[axis]) + 0.5) * self.cell_size[axis]

    def count(self) -> int:
        return int(self.occupancy.sum())

    def occupied_box(self) -> Tuple[np.ndarray, np.ndarray]:
        """Bounds of the occupied cells (cell faces, not centers)"""
        index = np.argwhere(self.occupancy)
        if index.size == 0:
            raise InvalidInputException("grid has no occupied cell", field="grid")
        size = self.cell_size
        return np.asarray(self.lo) + index.min(axis=0) * size, np.asarray(self.lo) + (index.max(axis=0) + 1) * size

    def same_frame(self, other: "VoxelGrid") -> bool:
        return (
            tuple(self.resolution) == tuple(other.resolution)
            and np.allclose(self.lo, other.lo, rtol=0, atol=0)
            and np.allclose(self.hi, other.hi, rtol=0, atol=0)
        )


def _resolution(resolution) -> Tuple[int, int, int]:
    if np.isscalar(resolution):
        resolution = (resolution,) * 3
    res = tuple(int(r) for r in resolution)
    if len(res) != 3 or min(res) < 1:
        raise InvalidInputException(f"resolution must be >= 1 per axis, got {resolution}", field="resolution")
    return res


def union_bounds(*vertex_sets, padding: float = 0.05) -> Tuple[np.ndarray, np.ndarray]:
    """Bounding box of all sets grown by ``padding`` of its extent on each side"""
    points = np.concatenate([np.asarray(v, dtype=np.float64).reshape(-1, 3) for v in vertex_sets])
    if points.size == 0:
        raise InvalidInputException("no vertices to bound", field="vertices")
    lo, hi = points.min(axis=0), points.max(axis=0)
    extent = hi - lo
    fallback = extent.max() if extent.max() > 0 else 1.0
    pad = np.where(extent > 0, extent, fallback) * padding
    return lo - pad, hi + pad


def _ray_parity(vertices: np.ndarray, faces: np.ndarray, grid_lo, size, res, axis: int) -> np.ndarray:
    """Crossing parity for rays cast along +axis from every cell center"""
    u, v = [a for a in range(3) if a != axis]
    tri = vertices[faces]  # (T, 3, 3)
    pu, pv, pw = tri[:, :, u], tri[:, :, v], tri[:, :, axis]
    ray_u = grid_lo[u] + (np.arange(res[u]) + 0.5 + _JITTER[u]) * size[u]
    ray_v = grid_lo[v] + (np.arange(res[v]) + 0.5 + _JITTER[v]) * size[v]
    centers_w = grid_lo[axis] + (np.arange(res[axis]) + 0.5) * size[axis]

    area = (pu[:, 1] - pu[:, 0]) * (pv[:, 2] - pv[:, 0]) - (pu[:, 2] - pu[:, 0]) * (pv[:, 1] - pv[:, 0])
    hits = [[] for _ in range(res[u] * res[v])]
    for t in np.nonzero(area != 0)[0]:
        iu = np.nonzero((ray_u >= pu[t].min()) & (ray_u <= pu[t].max()))[0]
        iv = np.nonzero((ray_v >= pv[t].min()) & (ray_v <= pv[t].max()))[0]
        if iu.size == 0 or iv.size == 0:
            continue
        qu, qv = np.meshgrid(ray_u[iu], ray_v[iv], indexing="ij")
        w = []
        for a, b in ((1, 2), (2, 0), (0, 1)):
            w.append((pu[t, b] - pu[t, a]) * (qv - pv[t, a]) - (pv[t, b] - pv[t, a]) * (qu - pu[t, a]))
        w = np.stack(w) / area[t]
        inside = (w >= 0).all(axis=0)
        if not inside.any():
            continue
        depth = (w[0] * pw[t, 0] + w[1] * pw[t, 1] + w[2] * pw[t, 2])[inside]
        cols = (iu[:, None] * res[v] + iv[None, :])[inside]
        for col, d in zip(cols, depth):
            hits[col].append(d)

    parity = np.zeros((res[u], res[v], res[axis]), dtype=bool)
    for col, values in enumerate(hits):
        if not values:
            continue
        ordered = np.sort(values)
        above = ordered.size - np.searchsorted(ordered, centers_w, side="right")
        parity[col // res[v], col % res[v]] = (above % 2) == 1
    # back to (x, y, z) order
    order = [u, v, axis]
    return np.transpose(parity, np.argsort(order))


def voxelize(vertices, faces, bounds, resolution=64) -> VoxelGrid:
    """Occupancy of every cell center inside ``bounds`` = (lo, hi) at the given resolution"""
    lo = np.asarray(bounds[0], dtype=np.float64)
    hi = np.asarray(bounds[1], dtype=np.float64)
    if lo.shape != (3,) or hi.shape != (3,) or not (lo < hi).all():
        raise InvalidInputException(f"degenerate bounds {lo.tolist()} .. {hi.tolist()}", field="bounds")
    res = _resolution(resolution)
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    size = (hi - lo) / np.asarray(res)
    if faces.shape[0] == 0:
        votes = np.zeros(res, dtype=np.int64)
    else:
        votes = sum(_ray_parity(vertices, faces, lo, size, res, axis).astype(np.int64) for axis in range(3))
    return VoxelGrid(tuple(lo.tolist()), tuple(hi.tolist()), res, votes >= 2)


def miou(pred: VoxelGrid, ref: VoxelGrid) -> float:
    """|A ∩ B| / |A ∪ B|; 1 when both grids are empty"""
    if not pred.same_frame(ref):
        raise InvalidInputException("grids differ in bounds or resolution", field="grid")
    union = np.logical_or(pred.occupancy, ref.occupancy).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(pred.occupancy, ref.occupancy).sum() / union)


def scale_search(
    pred_vertices,
    faces,
    ref: VoxelGrid,
    scale_range: float = 1.5,
    steps: int = 21,
) -> Tuple[float, float]:
    """
    Scale (about the origin) maximizing IoU against ``ref``. Candidates are geometrically
    spaced over [ratio / scale_range, ratio · scale_range], where ratio is the reference
    occupied-box diagonal over the predicted vertex-box diagonal. First maximum wins.
    """
    if steps < 1:
        raise InvalidInputException(f"steps must be >= 1, got {steps}", field="steps")
    if not scale_range >= 1:
        raise InvalidInputException("scale range must be >= 1", field="scale_range")
    pred = np.asarray(pred_vertices, dtype=np.float64).reshape(-1, 3)
    ref_lo, ref_hi = ref.occupied_box()
    pred_diag = np.linalg.norm(pred.max(axis=0) - pred.min(axis=0))
    if pred_diag <= 0:
        raise InvalidInputException("predicted vertices have zero extent", field="pred_vertices")
    ratio = float(np.linalg.norm(ref_hi - ref_lo) / pred_diag)
    exponents = np.linspace(-1.0, 1.0, steps) if steps > 1 else np.zeros(1)
    best_scale, best_iou = None, -1.0
    for scale in ratio * scale_range ** exponents:
        grid = voxelize(pred * scale, faces, (ref.lo, ref.hi), ref.resolution)
        iou = miou(grid, ref)
        if iou > best_iou:
            best_scale, best_iou = float(scale), iou
    return best_scale, best_iou
