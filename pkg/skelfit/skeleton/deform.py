# File: skelfit/skeleton/deform.py
"""
Full articulation pipeline: displacement field → forward kinematics → stretchable skinning.

``prepare`` evaluates everything that only depends on shape variables (displaced canonical
vertices, rest skeleton, endpoint weights, skinning weights) so a multi-frame evaluation
pays for it once; ``deform`` is the single-frame convenience wrapper.
"""

from __future__ import annotations

from typing import List, NamedTuple

import torch

from . import quaternion
from .displacement import apply_displacement
from .kinematics import forward_kinematics, rest_transforms
from .skinning import endpoint_weights, skin_stretchable
from .types import BoneTransforms, FramePose, PoseSequence, RigidTransform, ShapeParams, SkeletalShape


class PreparedShape(NamedTuple):
    shape: SkeletalShape
    params: ShapeParams
    vertices: torch.Tensor   # displaced canonical vertices
    weights: torch.Tensor    # skinning weights on the simplex
    rest: BoneTransforms
    endpoint: torch.Tensor


def canonical_vertices(shape: SkeletalShape, params: ShapeParams) -> torch.Tensor:
    return apply_displacement(shape.mesh.vertices, params.displacement, params.scale)


def prepare(shape: SkeletalShape, params: ShapeParams) -> PreparedShape:
    vertices = canonical_vertices(shape, params)
    rest = rest_transforms(shape.tree, length_scale=params.scale)
    return PreparedShape(
        shape=shape,
        params=params,
        vertices=vertices,
        weights=params.skinning_weights(),
        rest=rest,
        endpoint=endpoint_weights(vertices, rest),
    )


def pose_bones(prepared: PreparedShape, frame: FramePose) -> BoneTransforms:
    root = RigidTransform(quaternion.normalize(frame.root.rotation), frame.root.translation)
    return forward_kinematics(
        prepared.shape.tree,
        prepared.params.bone_scales,
        quaternion.normalize(frame.joints),
        root,
        length_scale=prepared.params.scale,
    )


def deform_prepared(prepared: PreparedShape, frame: FramePose) -> torch.Tensor:
    posed = pose_bones(prepared, frame)
    return skin_stretchable(
        prepared.vertices,
        prepared.weights,
        posed,
        prepared.rest,
        prepared.params.bone_scales,
        prepared.endpoint,
    )


def deform(shape: SkeletalShape, params: ShapeParams, frame: FramePose) -> torch.Tensor:
    return deform_prepared(prepare(shape, params), frame)


def deform_sequence(shape: SkeletalShape, params: ShapeParams, poses: PoseSequence) -> List[torch.Tensor]:
    prepared = prepare(shape, params)
    return [deform_prepared(prepared, frame) for frame in poses.frames]
