# File: skelfit/render/flow.py
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import torch

from .camera import Camera, project
from .raster import PixelPairs, candidate_pairs, edge_functions, inside_mask, screen_triangles
from .._constant import DTYPE
from ..exception import InvalidInputException


@dataclass(frozen=True)
class FlowMap:
    """Per-pixel displacement (H, W, 2), u right and v down, with a validity mask (H, W)"""

    flow: torch.Tensor
    valid: torch.Tensor

    @property
    def shape(self) -> Tuple[int, int]:
        return tuple(self.valid.shape)

    @classmethod
    def empty(cls, height: int, width: int) -> "FlowMap":
        return cls(torch.zeros(height, width, 2, dtype=DTYPE), torch.zeros(height, width, dtype=torch.bool))

    def detach(self) -> "FlowMap":
        return FlowMap(self.flow.detach().clone(), self.valid.clone())

    def validate(self) -> "FlowMap":
        h, w = self.valid.shape
        if tuple(self.flow.shape) != (h, w, 2):
            raise InvalidInputException(f"expected ({h}, {w}, 2), got {tuple(self.flow.shape)}", field="flow")
        if (self.flow[~self.valid] != 0).any():
            raise InvalidInputException("invalid pixels must carry zero flow", field="flow")
        return self


def visible_faces(vertices: torch.Tensor, faces: torch.Tensor, cam: Camera) -> PixelPairs:
    """
    Hard z-buffer: for every covered pixel, the front-most triangle.
    Returns (pixels, faces, centers) of the winning pairs, ordered by pixel index.
    Depth ties go to the lower triangle index.
    """
    with torch.no_grad():
        tris = screen_triangles(vertices.detach(), faces, cam.detach())
        pairs = candidate_pairs(tris, cam)
        if pairs.pixels.numel() == 0:
            return pairs
        corners = tris.corners[pairs.faces]
        edges = edge_functions(corners, pairs.centers)
        inside = inside_mask(edges)
        bary = edges / edges.sum(dim=-1, keepdim=True)
        # depth is affine in 1/z across a projected triangle
        inv_depth = (bary / tris.depths[pairs.faces]).sum(dim=-1)

        pixel = pairs.pixels[inside].numpy()
        face = pairs.faces[inside].numpy()
        depth = (1.0 / inv_depth[inside]).numpy()
        order = np.lexsort((face, depth, pixel))
        pixel, face = pixel[order], face[order]
        _, first = np.unique(pixel, return_index=True)
        keep = torch.from_numpy(order[first])
        hits = torch.nonzero(inside).squeeze(-1)[keep]
    return PixelPairs(pairs.pixels[hits], pairs.faces[hits], pairs.centers[hits])


def render_flow(
    vertices_t: torch.Tensor,
    vertices_t1: torch.Tensor,
    faces: torch.Tensor,
    cam: Camera,
    visibility: Optional[PixelPairs] = None,
) -> FlowMap:
    """
    Screen-space flow from frame t to t+1. Visibility is fixed by a depth test at frame t
    (or taken from ``visibility``, a previous ``visible_faces`` result); values are the
    barycentric interpolation of projected vertex displacements and carry gradients w.r.t.
    both vertex sets.
    """
    if vertices_t.shape != vertices_t1.shape:
        raise InvalidInputException(
            f"vertex sets differ in shape: {tuple(vertices_t.shape)} vs {tuple(vertices_t1.shape)}",
            field="vertices_t1",
        )
    height, width = int(cam.height), int(cam.width)
    hits = visible_faces(vertices_t, faces, cam) if visibility is None else visibility
    if hits.pixels.numel() == 0:
        return FlowMap.empty(height, width)

    pix_t, _, valid_t = project(cam.world_to_camera(vertices_t), cam)
    pix_t1, _, valid_t1 = project(cam.world_to_camera(vertices_t1), cam)
    corner_ids = faces[hits.faces]
    reachable = (valid_t & valid_t1)[corner_ids].all(dim=-1)
    pixels = hits.pixels[reachable]
    corner_ids = corner_ids[reachable]
    centers = hits.centers[reachable]

    edges = edge_functions(pix_t[corner_ids], centers)
    bary = edges / edges.sum(dim=-1, keepdim=True)
    displacement = (pix_t1 - pix_t)[corner_ids]
    values = (bary[..., None] * displacement).sum(dim=1)

    flow = torch.zeros(height * width, 2, dtype=DTYPE).index_copy(0, pixels, values)
    valid = torch.zeros(height * width, dtype=torch.bool)
    valid[pixels] = True
    return FlowMap(flow.reshape(height, width, 2), valid.reshape(height, width))
