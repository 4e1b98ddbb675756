# File: skelfit/optim/camera_search.py
"""
Camera initialization by sphere sampling.

Round 1 places candidate camera centers uniformly on a sphere around the object, looking at
its center, with intrinsics aligned in closed form so the projected vertex box matches the
observed mask box. Later rounds resample around the lowest-loss candidates with a shrinking
radius. The winner's intrinsics and look-at offset are then refined by Adam on the mask loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch

from .config import CameraSearchConfig
from .initialization import BBox, mask_bbox
from ..log import log
from ..render import Camera, rasterize_soft
from ..skeleton import RigidTransform, quaternion
from .._constant import DEPTH_EPSILON, DTYPE
from ..exception import FitException, InvalidInputException


@dataclass(frozen=True)
class Candidate:
    loss: float
    center: Tuple[float, float, float]
    fx: float
    cx: float
    cy: float


@dataclass(frozen=True)
class CameraEstimate:
    camera: Camera
    loss: float
    root: RigidTransform = field(default_factory=RigidTransform.identity)
    round_losses: Tuple[float, ...] = ()
    evaluated: int = 0


def look_at(center: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """World-to-camera rotation (rows are the camera axes) for a camera at ``center`` facing ``target``; image y points down"""
    forward = target - center
    forward = forward / torch.linalg.vector_norm(forward)
    up = torch.tensor([0.0, 1.0, 0.0], dtype=DTYPE)
    if abs(float(forward @ up)) > 0.99:
        up = torch.tensor([1.0, 0.0, 0.0], dtype=DTYPE)
    right = torch.linalg.cross(-up, forward)
    right = right / torch.linalg.vector_norm(right)
    down = torch.linalg.cross(forward, right)
    return torch.stack([right, down, forward])


def mask_loss(rendered: torch.Tensor, masks: torch.Tensor) -> torch.Tensor:
    return ((rendered[None] - masks) ** 2).mean(dim=(1, 2)).sum()


def _align_intrinsics(camera_points: torch.Tensor, box: BBox) -> Optional[Tuple[float, float, float]]:
    z = camera_points[:, 2]
    if not bool((z > DEPTH_EPSILON).all()):
        return None
    nx = (camera_points[:, 0] / z).numpy()
    ny = (camera_points[:, 1] / z).numpy()
    extent_x, extent_y = nx.max() - nx.min(), ny.max() - ny.min()
    if extent_x <= 0 or extent_y <= 0:
        return None
    row0, col0, row1, col1 = box
    f = math.sqrt(((col1 - col0) / extent_x) * ((row1 - row0) / extent_y))
    cx = 0.5 * (col0 + col1) - f * 0.5 * (nx.min() + nx.max())
    cy = 0.5 * (row0 + row1) - f * 0.5 * (ny.min() + ny.max())
    return f, cx, cy


class _Search:
    def __init__(self, vertices, faces, masks, base: Camera, sigma: float):
        self.vertices = vertices.detach()
        self.faces = faces
        self.masks = masks
        self.base = base
        self.sigma = sigma
        self.target = 0.5 * (self.vertices.min(dim=0).values + self.vertices.max(dim=0).values)
        self.box = mask_bbox(masks[0], field="masks[0]")
        self.evaluated = 0

    def evaluate(self, center) -> Candidate:
        self.evaluated += 1
        center_t = torch.as_tensor(center, dtype=DTYPE)
        if torch.linalg.vector_norm(self.target - center_t) <= 0:
            return Candidate(math.inf, tuple(center), 1.0, 0.0, 0.0)
        with torch.no_grad():
            rotation = look_at(center_t, self.target)
            points = (self.vertices - center_t) @ rotation.T
            intrinsics = _align_intrinsics(points, self.box)
            if intrinsics is None:
                return Candidate(math.inf, tuple(center), 1.0, 0.0, 0.0)
            f, cx, cy = intrinsics
            cam = self.base.with_intrinsics(f, f, cx, cy).with_extrinsics(
                quaternion.identity(), torch.zeros(3, dtype=DTYPE)
            )
            loss = float(mask_loss(rasterize_soft(points, self.faces, cam, self.sigma), self.masks))
        if not math.isfinite(loss):
            loss = math.inf
        return Candidate(loss, tuple(float(c) for c in center), f, cx, cy)


def _sphere(rng: np.random.Generator, count: int) -> np.ndarray:
    directions = rng.normal(size=(count, 3))
    return directions / np.linalg.norm(directions, axis=1, keepdims=True)


def _ball(rng: np.random.Generator, count: int) -> np.ndarray:
    return _sphere(rng, count) * rng.uniform(size=(count, 1)) ** (1.0 / 3.0)


def _ranked(candidates: Sequence[Candidate]) -> List[Candidate]:
    return sorted(candidates, key=lambda c: (c.loss, c.center))


def estimate_camera(
    vertices: torch.Tensor,
    faces: torch.Tensor,
    masks: torch.Tensor,
    search: CameraSearchConfig,
    base: Camera,
    sigma: float = 1e-4,
    seed: int = 0,
    extra_centers: Sequence[Sequence[float]] = (),
) -> CameraEstimate:
    """
    Camera for a rest-pose mesh against observed masks (T, H, W); the object root stays at
    identity. ``extra_centers`` are evaluated alongside the round-1 sphere samples.
    """
    search.validate()
    masks = torch.as_tensor(masks, dtype=DTYPE)
    if masks.ndim != 3 or masks.shape[0] == 0:
        raise InvalidInputException(f"expected (T, H, W) masks, got {tuple(masks.shape)}", field="masks")
    rng = np.random.default_rng(seed)
    searcher = _Search(vertices, faces, masks, base, sigma)

    target = searcher.target.numpy()
    centers = [target + search.radius * d for d in _sphere(rng, search.candidates)]
    centers += [np.asarray(c, dtype=float) for c in extra_centers]
    pool = _ranked([searcher.evaluate(c) for c in centers])
    round_losses = [pool[0].loss]
    log.info("camera search round", 1, "best mask loss", f"{pool[0].loss:.6g}")

    radius = search.local_radius
    per_candidate = max(1, search.candidates // search.top_k)
    for round_index in range(2, search.max_rounds + 1):
        top = pool[: search.top_k]
        local = []
        for candidate in top:
            offsets = radius * _ball(rng, per_candidate)
            local.extend(searcher.evaluate(np.asarray(candidate.center) + o) for o in offsets)
        pool = _ranked(top + local)
        previous, best = round_losses[-1], pool[0].loss
        round_losses.append(best)
        log.info("camera search round", round_index, "best mask loss", f"{best:.6g}")
        if not math.isfinite(previous) or previous <= 0 or (previous - best) < search.threshold * previous:
            break
        radius *= 0.5

    best = pool[0]
    if not math.isfinite(best.loss):
        raise FitException("no camera candidate produced a finite mask loss")
    camera, loss = _refine(searcher, best, search)
    log.info("camera search done", "loss", f"{loss:.6g}", "candidates", searcher.evaluated)
    return CameraEstimate(camera, loss, RigidTransform.identity(), tuple(round_losses), searcher.evaluated)


def _refine(searcher: _Search, best: Candidate, search: CameraSearchConfig) -> Tuple[Camera, float]:
    """Adam over (focal length, principal point, look-at offset) with best-so-far tracking"""
    base = searcher.base
    center = torch.tensor(best.center, dtype=DTYPE)
    scale = float(torch.linalg.vector_norm(searcher.target - center))
    log_f = torch.tensor(math.log(best.fx), dtype=DTYPE, requires_grad=True)
    shift = torch.zeros(2, dtype=DTYPE, requires_grad=True)   # principal point, in image widths
    offset = torch.zeros(3, dtype=DTYPE, requires_grad=True)  # look-at offset, in camera distances
    optimizer = torch.optim.Adam([log_f, shift, offset], lr=search.refine_rate)

    def evaluate():
        rotation = look_at(center, searcher.target + scale * offset)
        points = (searcher.vertices - center) @ rotation.T
        f = torch.exp(log_f)
        cam = base.with_intrinsics(
            f, f, best.cx + base.width * shift[0], best.cy + base.width * shift[1]
        ).with_extrinsics(quaternion.identity(), torch.zeros(3, dtype=DTYPE))
        return mask_loss(rasterize_soft(points, searcher.faces, cam, searcher.sigma), searcher.masks), rotation

    def snapshot(loss, rotation):
        f = float(torch.exp(log_f).detach())
        return float(loss), f, best.cx + base.width * float(shift[0]), best.cy + base.width * float(shift[1]), rotation.detach()

    with torch.no_grad():
        rotation = look_at(center, searcher.target)
    record = (best.loss, best.fx, best.cx, best.cy, rotation)
    history = [best.loss]
    for iteration in range(search.refine_iterations):
        optimizer.zero_grad()
        loss, rotation = evaluate()
        value = float(loss.detach())
        if not math.isfinite(value):
            log.warning("camera refinement produced a non-finite loss; keeping best")
            break
        if value < record[0]:
            record = snapshot(value, rotation)
        history.append(value)
        if len(history) > search.patience:
            before = history[-1 - search.patience]
            if before <= 0 or (before - value) < search.threshold * before:
                break
        loss.backward()
        optimizer.step()

    loss, f, cx, cy, rotation = record
    translation = -(rotation @ center)
    camera = Camera(
        fx=f, fy=f, cx=cx, cy=cy, width=base.width, height=base.height,
        rotation=quaternion.from_matrix(rotation), translation=translation,
    )
    return camera, loss
