# File: skelfit/energy/terms.py
"""Individual energy terms and the Chamfer primitive shared with the metric suite."""

from __future__ import annotations

from typing import Sequence, Tuple

import torch

from ..render import FlowMap
from ..skeleton import PoseSequence, quaternion
from .._constant import DTYPE, UNIT_TOLERANCE
from ..exception import InvalidInputException


def _points(values, field: str) -> torch.Tensor:
    points = torch.as_tensor(values, dtype=DTYPE)
    if points.ndim != 2 or points.shape[0] == 0:
        raise InvalidInputException(f"expected a nonempty (M, d) point set, got {tuple(points.shape)}", field=field)
    return points


def squared_distances(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """(|A|, |B|) pairwise squared Euclidean distances, evaluated exactly (no Gram expansion)"""
    diff = a[:, None, :] - b[None, :, :]
    return (diff * diff).sum(-1)


def chamfer(a, b) -> torch.Tensor:
    """Mean nearest-neighbor squared distance from A to B plus the same from B to A"""
    a = _points(a, "A")
    b = _points(b, "B")
    d2 = squared_distances(a, b)
    return d2.min(dim=1).values.mean() + d2.min(dim=0).values.mean()


def _mask_stack(masks, field: str) -> torch.Tensor:
    stack = masks if isinstance(masks, torch.Tensor) else torch.stack(list(masks))
    if stack.ndim != 3:
        raise InvalidInputException(f"expected (T, H, W) masks, got {tuple(stack.shape)}", field=field)
    return stack


def e_cue(
    rendered_masks,
    observed_masks,
    rendered_flows: Sequence[FlowMap],
    observed_flows: Sequence[FlowMap],
) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    (mask term, flow term). Mask: per-frame mean squared silhouette difference, summed over
    frames. Flow: per-frame mean squared flow difference over pixels valid in both maps,
    summed over frames; frames with no common valid pixel contribute 0.
    """
    rendered = _mask_stack(rendered_masks, "rendered_masks")
    observed = _mask_stack(observed_masks, "observed_masks").to(DTYPE)
    if rendered.shape != observed.shape:
        raise InvalidInputException(
            f"mask stacks differ: {tuple(rendered.shape)} vs {tuple(observed.shape)}", field="observed_masks"
        )
    mask_term = ((rendered - observed) ** 2).mean(dim=(1, 2)).sum()

    if len(rendered_flows) != len(observed_flows):
        raise InvalidInputException(
            f"{len(rendered_flows)} rendered flows vs {len(observed_flows)} observed", field="observed_flows"
        )
    flow_term = torch.zeros((), dtype=DTYPE)
    for t, (mine, theirs) in enumerate(zip(rendered_flows, observed_flows)):
        if mine.shape != theirs.shape or mine.shape != tuple(rendered.shape[1:]):
            raise InvalidInputException(
                f"flow {t} is {theirs.shape}, rendered {mine.shape}", field=f"observed_flows[{t}]"
            )
        both = mine.valid & theirs.valid
        count = int(both.sum())
        if count == 0:
            continue
        residual = (mine.flow - theirs.flow.to(DTYPE))[both]
        flow_term = flow_term + (residual * residual).sum() / count
    return mask_term, flow_term


def e_smooth(poses: PoseSequence) -> torch.Tensor:
    """Σ_t Σ_k ‖canon(q_k^t⁻¹ ∘ q_k^{t+1}) − identity‖²; zero for a single frame"""
    joints = poses.joints
    if joints.shape[0] < 2:
        return torch.zeros((), dtype=DTYPE)
    relative = quaternion.canonicalize(quaternion.multiply(quaternion.conjugate(joints[:-1]), joints[1:]))
    return ((relative - quaternion.identity()) ** 2).sum()


def _unit_normal(normal) -> torch.Tensor:
    n = torch.as_tensor(normal, dtype=DTYPE)
    if tuple(n.shape) != (3,):
        raise InvalidInputException(f"expected a 3-vector, got {tuple(n.shape)}", field="normal")
    norm = torch.linalg.vector_norm(n).item()
    if norm == 0.0:
        raise InvalidInputException("reflection normal is zero", field="normal")
    if abs(norm - 1.0) > UNIT_TOLERANCE:
        raise InvalidInputException(f"reflection normal has norm {norm:.12g}, expected 1", field="normal")
    return n


def householder_reflect(points, normal) -> torch.Tensor:
    """p ↦ (I − 2nnᵀ)p"""
    n = _unit_normal(normal)
    points = torch.as_tensor(points, dtype=DTYPE)
    return points - 2.0 * (points @ n)[..., None] * n


def e_symm(canonical_vertices, normal) -> torch.Tensor:
    vertices = _points(canonical_vertices, "canonical_vertices")
    return chamfer(vertices, householder_reflect(vertices, normal))
