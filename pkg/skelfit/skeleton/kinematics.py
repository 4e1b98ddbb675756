# File: skelfit/skeleton/kinematics.py
from __future__ import annotations

import torch

from . import quaternion
from .types import BoneTransforms, KinematicTree, RigidTransform
from .._constant import DTYPE
from ..exception import InvalidInputException


def forward_kinematics(
    tree: KinematicTree,
    bone_scales: torch.Tensor,
    joints: torch.Tensor,
    root: RigidTransform,
    length_scale=1.0,
) -> BoneTransforms:
    """
    World transforms of every bone by composing relative transforms down the tree.

    Bone k relative to its parent maps x ↦ (s_k·b_k)·e_z + R(rest_k)·R(q_k)·x, where s_k is
    the bone scale and b_k the offset length; the root composes with ``root``. Lengths are
    additionally multiplied by ``length_scale`` (the global shape scale).
    """
    k = tree.num_bones
    if joints.shape != (k, 4):
        raise InvalidInputException(f"expected ({k}, 4) joint quaternions, got {tuple(joints.shape)}", field="joints")
    if bone_scales.shape != (k,):
        raise InvalidInputException(f"expected ({k},) bone scales, got {tuple(bone_scales.shape)}", field="bone_scales")
    quaternion.check_unit(joints, "joints")
    quaternion.check_unit(root.rotation, "root.rotation")

    local = quaternion.to_matrix(tree.rest_rotations) @ quaternion.to_matrix(joints)
    offsets = bone_scales * tree.offset_lengths * length_scale
    segments = bone_scales * tree.segment_lengths * length_scale

    root_rotation = quaternion.to_matrix(root.rotation)
    rotations, translations = [], []
    for bone, parent in enumerate(tree.parents):
        if parent is None:
            parent_r, parent_t = root_rotation, root.translation
        else:
            parent_r, parent_t = rotations[parent], translations[parent]
        translations.append(parent_t + parent_r[:, 2] * offsets[bone])
        rotations.append(parent_r @ local[bone])

    rotations = torch.stack(rotations)
    translations = torch.stack(translations)
    tails = translations + rotations[:, :, 2] * segments[:, None]
    return BoneTransforms(rotations, translations, translations, tails)


def rest_transforms(tree: KinematicTree, length_scale=1.0) -> BoneTransforms:
    """Canonical pose: identity joints, unit bone scales, identity root"""
    return forward_kinematics(
        tree,
        torch.ones(tree.num_bones, dtype=DTYPE),
        quaternion.identity(tree.num_bones),
        RigidTransform.identity(),
        length_scale=length_scale,
    )
