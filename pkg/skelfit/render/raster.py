# File: skelfit/render/raster.py
"""
Silhouette rasterization.

Pixel centers sit at (j + 0.5, i + 0.5). Work is organised as (pixel, triangle) pairs found
from each projected triangle's bounding box, so cost scales with covered area rather than
with pixels × triangles. Pairs are generated in triangle order and accumulated per pixel in
that fixed order.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
import torch
import torch.nn.functional as F

from .camera import Camera, project
from .._constant import DTYPE, SOFT_CUTOFF
from ..exception import InvalidInputException


class ScreenTriangles(NamedTuple):
    corners: torch.Tensor  # (T, 3, 2) pixel coordinates
    depths: torch.Tensor   # (T, 3)
    valid: torch.Tensor    # (T,) every corner in front of the camera


class PixelPairs(NamedTuple):
    pixels: torch.Tensor  # (P,) flat pixel index row * width + col
    faces: torch.Tensor   # (P,) triangle index
    centers: torch.Tensor  # (P, 2) pixel-center coordinates


def screen_triangles(vertices: torch.Tensor, faces: torch.Tensor, cam: Camera) -> ScreenTriangles:
    pixels, depth, valid = project(cam.world_to_camera(vertices), cam)
    if faces.numel() == 0:
        empty = torch.zeros(0, 3, dtype=DTYPE)
        return ScreenTriangles(torch.zeros(0, 3, 2, dtype=DTYPE), empty, torch.zeros(0, dtype=torch.bool))
    return ScreenTriangles(pixels[faces], depth[faces], valid[faces].all(dim=1))


def candidate_pairs(tris: ScreenTriangles, cam: Camera, margin: float = 0.0) -> PixelPairs:
    """All pixel centers inside each valid triangle's bounding box grown by ``margin`` pixels"""
    width, height = int(cam.width), int(cam.height)
    corners = tris.corners.detach().numpy()
    keep = tris.valid.numpy() & np.isfinite(corners).all(axis=(1, 2))
    face_ids = np.nonzero(keep)[0]
    if face_ids.size == 0:
        return _empty_pairs()
    box = corners[face_ids]
    lo = box.min(axis=1) - margin
    hi = box.max(axis=1) + margin
    # first/last pixel index whose center (j + 0.5) falls inside [lo, hi]
    col0 = np.clip(np.ceil(lo[:, 0] - 0.5), 0, width).astype(np.int64)
    col1 = np.clip(np.floor(hi[:, 0] - 0.5), -1, width - 1).astype(np.int64)
    row0 = np.clip(np.ceil(lo[:, 1] - 0.5), 0, height).astype(np.int64)
    row1 = np.clip(np.floor(hi[:, 1] - 0.5), -1, height - 1).astype(np.int64)
    cols = np.maximum(col1 - col0 + 1, 0)
    rows = np.maximum(row1 - row0 + 1, 0)
    counts = cols * rows
    total = int(counts.sum())
    if total == 0:
        return _empty_pairs()
    owner = np.repeat(np.arange(face_ids.size), counts)
    starts = np.repeat(np.cumsum(counts) - counts, counts)
    local = np.arange(total) - starts
    col = col0[owner] + local % cols[owner]
    row = row0[owner] + local // cols[owner]
    centers = np.stack([col + 0.5, row + 0.5], axis=-1)
    return PixelPairs(
        torch.from_numpy(row * width + col),
        torch.from_numpy(face_ids[owner]),
        torch.as_tensor(centers, dtype=DTYPE),
    )


def _empty_pairs() -> PixelPairs:
    return PixelPairs(
        torch.zeros(0, dtype=torch.int64),
        torch.zeros(0, dtype=torch.int64),
        torch.zeros(0, 2, dtype=DTYPE),
    )


def _cross(u: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def edge_functions(tri: torch.Tensor, p: torch.Tensor) -> torch.Tensor:
    """(P, 3) signed doubled areas of the sub-triangles opposite each corner"""
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    return torch.stack([_cross(c - b, p - b), _cross(a - c, p - c), _cross(b - a, p - a)], dim=-1)


def inside_mask(edges: torch.Tensor) -> torch.Tensor:
    area = edges.sum(dim=-1)
    nonneg = (edges >= 0).all(dim=-1)
    nonpos = (edges <= 0).all(dim=-1)
    return (nonneg | nonpos) & (area != 0)


def _squared_edge_distance(tri: torch.Tensor, p: torch.Tensor) -> torch.Tensor:
    """Squared distance from p to the nearest point of the triangle boundary"""
    distances = []
    for i in range(3):
        a = tri[:, i]
        b = tri[:, (i + 1) % 3]
        ab = b - a
        length2 = (ab * ab).sum(-1)
        safe = torch.where(length2 > 0, length2, torch.ones_like(length2))
        t = torch.clamp(((p - a) * ab).sum(-1) / safe, 0.0, 1.0)
        closest = a + t[:, None] * ab
        diff = p - closest
        distances.append((diff * diff).sum(-1))
    return torch.stack(distances, dim=-1).min(dim=-1).values


def rasterize_soft(vertices: torch.Tensor, faces: torch.Tensor, cam: Camera, sigma: float) -> torch.Tensor:
    """
    Differentiable coverage map (H, W). Each triangle contributes
    D = logistic(±d²/σ) (+ inside, − outside, d in normalized device units) and
    occupancy = 1 − Π_j (1 − D_j), evaluated in log space.
    """
    if not sigma > 0:
        raise InvalidInputException("sigma must be positive", field="sigma")
    height, width = int(cam.height), int(cam.width)
    tris = screen_triangles(vertices, faces, cam)
    margin = math.sqrt(SOFT_CUTOFF * sigma) / cam.ndc_scale
    pairs = candidate_pairs(tris, cam, margin=margin)
    if pairs.pixels.numel() == 0:
        return torch.zeros(height, width, dtype=DTYPE)

    scale = cam.ndc_scale
    tri = tris.corners[pairs.faces] * scale
    p = pairs.centers * scale
    inside = inside_mask(edge_functions(tri, p))
    d2 = _squared_edge_distance(tri, p)
    x = torch.where(inside, d2, -d2) / sigma
    log_empty = torch.zeros(height * width, dtype=DTYPE).index_add(0, pairs.pixels, F.logsigmoid(-x))
    return (-torch.expm1(log_empty)).reshape(height, width)


def rasterize_hard(vertices: torch.Tensor, faces: torch.Tensor, cam: Camera) -> torch.Tensor:
    """Binary coverage map (H, W): 1 where a pixel center lies inside any projected triangle"""
    height, width = int(cam.height), int(cam.width)
    with torch.no_grad():
        tris = screen_triangles(vertices.detach(), faces, cam.detach())
        pairs = candidate_pairs(tris, cam)
        out = torch.zeros(height * width, dtype=DTYPE)
        if pairs.pixels.numel():
            inside = inside_mask(edge_functions(tris.corners[pairs.faces], pairs.centers))
            out[pairs.pixels[inside]] = 1.0
    return out.reshape(height, width)
