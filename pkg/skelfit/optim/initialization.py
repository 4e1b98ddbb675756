# File: skelfit/optim/initialization.py
from __future__ import annotations

import math
from typing import Tuple

import numpy as np
import torch
from scipy.cluster.vq import kmeans2

from ..skeleton import SkeletalShape, rest_transforms
from .._constant import DTYPE
from ..exception import InvalidInputException

BBox = Tuple[int, int, int, int]  # row0, col0, row1, col1 (exclusive ends)


def mask_bbox(mask, threshold: float = 0.5, field: str = "mask") -> BBox:
    """Tight pixel box of the values >= threshold"""
    occupied = np.asarray(torch.as_tensor(mask).detach().numpy() >= threshold)
    rows = np.nonzero(occupied.any(axis=1))[0]
    cols = np.nonzero(occupied.any(axis=0))[0]
    if rows.size == 0:
        raise InvalidInputException("mask is empty", field=field)
    return int(rows[0]), int(cols[0]), int(rows[-1]) + 1, int(cols[-1]) + 1


def init_scale(rendered_box: BBox, observed_box: BBox) -> float:
    """Geometric mean of the per-axis extent ratios observed / rendered"""
    rh, rw = rendered_box[2] - rendered_box[0], rendered_box[3] - rendered_box[1]
    oh, ow = observed_box[2] - observed_box[0], observed_box[3] - observed_box[1]
    if rh <= 0 or rw <= 0:
        raise InvalidInputException("rendered silhouette box is empty", field="rendered_box")
    if oh <= 0 or ow <= 0:
        raise InvalidInputException("observed mask box is empty", field="observed_box")
    return math.sqrt((oh / rh) * (ow / rw))


def kmeans_skinning(shape: SkeletalShape) -> torch.Tensor:
    """
    Skinning weights from k-means over the canonical vertices, one cluster per bone seeded at
    the rest bone midpoint. Weights are the normalized exponential of negative squared distance
    to each center over the mean squared intra-cluster distance.
    """
    vertices = shape.mesh.vertices.detach().numpy()
    rest = rest_transforms(shape.tree)
    midpoints = (0.5 * (rest.heads + rest.tails)).detach().numpy()
    centers, labels = kmeans2(vertices, midpoints.copy(), minit="matrix", iter=20, missing="warn")
    d2 = ((vertices[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
    intra = d2[np.arange(len(vertices)), labels]
    bandwidth = float(intra.mean()) if intra.size and intra.mean() > 0 else 1.0
    return torch.softmax(torch.as_tensor(-d2 / bandwidth, dtype=DTYPE), dim=-1)
