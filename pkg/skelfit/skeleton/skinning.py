# File: skelfit/skeleton/skinning.py
from __future__ import annotations

import torch

from .types import BoneTransforms
from ..exception import InvalidInputException


def endpoint_weights(vertices: torch.Tensor, rest: BoneTransforms) -> torch.Tensor:
    """
    Fraction along each rest bone segment where a vertex projects, clamped to [0, 1].
    Bones with a zero-length segment get 0. Returns (N, K).
    """
    axis = rest.tails - rest.heads                        # (K, 3)
    length2 = (axis * axis).sum(-1)                       # (K,)
    degenerate = length2 <= 0
    safe = torch.where(degenerate, torch.ones_like(length2), length2)
    rel = vertices[:, None, :] - rest.heads[None, :, :]   # (N, K, 3)
    fraction = (rel * axis[None]).sum(-1) / safe
    fraction = torch.clamp(fraction, 0.0, 1.0)
    return torch.where(degenerate[None, :], torch.zeros_like(fraction), fraction)


def skin_lbs(vertices: torch.Tensor, weights: torch.Tensor, transforms: BoneTransforms) -> torch.Tensor:
    """v_i = Σ_k w_ik · T_k(v_i)"""
    per_bone = torch.einsum("kab,nb->nka", transforms.rotations, vertices) + transforms.translations[None]
    return (weights[..., None] * per_bone).sum(dim=1)


def skin_stretchable(
    vertices: torch.Tensor,
    weights: torch.Tensor,
    transforms: BoneTransforms,
    rest: BoneTransforms,
    bone_scales: torch.Tensor,
    endpoint: torch.Tensor,
) -> torch.Tensor:
    """
    Stretch-aware skinning about bone heads:

        v_i = Σ_k w_ik (c_k^t + R_k (e_k(v_i)·s_k + (v_i − c_k)))

    with s_k = (b_k − 1)(d_k − c_k) at rest and R_k the rotation from rest to posed frame.
    Unit bone scales reproduce linear blend skinning with rest-relative transforms.
    """
    expected = (vertices.shape[0], transforms.num_bones)
    if tuple(endpoint.shape) != expected:
        raise InvalidInputException(f"expected {expected}, got {tuple(endpoint.shape)}", field="endpoint")
    stretch = (bone_scales - 1.0)[:, None] * (rest.tails - rest.heads)               # (K, 3)
    local = endpoint[..., None] * stretch[None] + (vertices[:, None, :] - rest.heads[None])
    relative = transforms.rotations @ rest.rotations.transpose(-1, -2)
    per_bone = transforms.heads[None] + torch.einsum("kab,nkb->nka", relative, local)
    return (weights[..., None] * per_bone).sum(dim=1)
