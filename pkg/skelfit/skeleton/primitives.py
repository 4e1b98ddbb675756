# File: skelfit/skeleton/primitives.py
"""
Procedural templates: rigged tubes, a branching quadruped rig, cubes and random kinematic trees.
Used for synthetic observation generation and the gradient-check scenes.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
import torch

from . import quaternion
from .kinematics import rest_transforms
from .types import FramePose, KinematicTree, PoseSequence, RigidTransform, SkeletalShape, SkinnedMesh
from .._constant import DTYPE


def chain_tree(num_bones: int, bone_length: float = 1.0) -> KinematicTree:
    offsets = [0.0] + [bone_length] * (num_bones - 1)
    return KinematicTree.from_offsets([None] + list(range(num_bones - 1)), offsets, tip_length=bone_length)


def tube_shape(
    num_bones: int = 3,
    bone_length: float = 1.0,
    radius: float = 0.3,
    rings_per_bone: int = 2,
    segments: int = 8,
    blend: float = 0.35,
) -> SkeletalShape:
    """
    Closed tube along +z rigged to a bone chain. With an even ``segments`` count the
    surface is mirror-symmetric about the x = 0 plane.
    """
    total = num_bones * bone_length
    rings = num_bones * rings_per_bone
    vertices = []
    for i in range(rings + 1):
        z = total * i / rings
        for j in range(segments):
            angle = 2.0 * math.pi * j / segments
            vertices.append((radius * math.sin(angle), radius * math.cos(angle), z))
    bottom = len(vertices)
    vertices.append((0.0, 0.0, 0.0))
    top = len(vertices)
    vertices.append((0.0, 0.0, total))

    faces = []
    for i in range(rings):
        for j in range(segments):
            a = i * segments + j
            b = i * segments + (j + 1) % segments
            c = (i + 1) * segments + (j + 1) % segments
            d = (i + 1) * segments + j
            faces.append((a, b, c))
            faces.append((a, c, d))
    for j in range(segments):
        faces.append((bottom, (j + 1) % segments, j))
        faces.append((top, rings * segments + j, rings * segments + (j + 1) % segments))

    verts = torch.tensor(vertices, dtype=DTYPE)
    centers = (torch.arange(num_bones, dtype=DTYPE) + 0.5) * bone_length
    logits = -(((verts[:, 2:3] - centers[None]) / (blend * bone_length)) ** 2)
    skinning = torch.softmax(logits, dim=-1)
    mesh = SkinnedMesh(verts, torch.tensor(faces, dtype=torch.int64), skinning)
    return SkeletalShape(mesh, chain_tree(num_bones, bone_length)).validate()


def cube_mesh(lo: float = 0.0, hi: float = 1.0) -> SkinnedMesh:
    """Axis-aligned closed cube, single bone"""
    corners = torch.tensor(
        [[x, y, z] for x in (lo, hi) for y in (lo, hi) for z in (lo, hi)], dtype=DTYPE
    )
    faces = torch.tensor([
        [0, 1, 3], [0, 3, 2],  # x = lo
        [4, 6, 7], [4, 7, 5],  # x = hi
        [0, 4, 5], [0, 5, 1],  # y = lo
        [2, 3, 7], [2, 7, 6],  # y = hi
        [0, 2, 6], [0, 6, 4],  # z = lo
        [1, 5, 7], [1, 7, 3],  # z = hi
    ], dtype=torch.int64)
    return SkinnedMesh(corners, faces, torch.ones(8, 1, dtype=DTYPE))


def cube_shape(lo: float = 0.0, hi: float = 1.0) -> SkeletalShape:
    tree = KinematicTree.from_offsets([None], [0.0], tip_length=hi - lo)
    return SkeletalShape(cube_mesh(lo, hi), tree).validate()



def quadruped_tree(
    body_length: float = 2.0,
    neck_length: float = 0.6,
    head_length: float = 0.5,
    tail_length: float = 0.8,
    hip_width: float = 0.35,
    leg_length: float = 0.9,
) -> KinematicTree:
    """
    Branching rig with the spine along +z and legs along -y: spine, neck, head, tail and
    four hip/leg pairs. Hips point sideways so left and right legs separate.
    """
    up_neck = quaternion.from_axis_angle([1.0, 0.0, 0.0], -0.6)
    back_tail = quaternion.from_axis_angle([1.0, 0.0, 0.0], math.pi + 0.4)
    left = quaternion.from_axis_angle([0.0, 1.0, 0.0], math.pi / 2)
    right = quaternion.from_axis_angle([0.0, 1.0, 0.0], -math.pi / 2)
    down = quaternion.from_axis_angle([1.0, 0.0, 0.0], math.pi / 2)
    still = quaternion.identity()

    bones = [
        (None, 0.0, body_length, still),       # spine
        (0, body_length, neck_length, up_neck),
        (1, neck_length, head_length, still),
        (0, 0.05 * body_length, tail_length, back_tail),
    ]
    for along in (0.85, 0.15):
        for side in (left, right):
            hip = len(bones)
            bones.append((0, along * body_length, hip_width, side))
            bones.append((hip, hip_width, leg_length, down))
    parents, offsets, segments, rest = zip(*bones)
    return KinematicTree(
        tuple(parents),
        torch.tensor(offsets, dtype=DTYPE),
        torch.tensor(segments, dtype=DTYPE),
        torch.stack(list(rest)),
    ).validate()


def rigged_tubes(
    tree: KinematicTree,
    radius: float = 0.2,
    rings_per_bone: int = 2,
    segments: int = 8,
    blend: float = 0.3,
) -> SkeletalShape:
    """
    One capped tube around every bone with a nonzero segment, placed at the rest pose.
    Vertices near a bone's head share weight with the parent bone. Tubes overlap at the
    joints, so the surface is a union of closed pieces rather than a single closed mesh.
    """
    rest = rest_transforms(tree)
    num_bones = tree.num_bones
    vertices, faces, weights = [], [], []

    for k in range(num_bones):
        length = float(tree.segment_lengths[k])
        if length <= 0.0:
            continue
        parent = tree.parents[k]
        base = len(vertices)
        local = []
        for i in range(rings_per_bone + 1):
            s = length * i / rings_per_bone
            for j in range(segments):
                angle = 2.0 * math.pi * j / segments
                local.append((radius * math.sin(angle), radius * math.cos(angle), s))
        local += [(0.0, 0.0, 0.0), (0.0, 0.0, length)]
        placed = rest.apply(k, torch.tensor(local, dtype=DTYPE))
        vertices.extend(placed.tolist())

        for _, _, s in local:
            row = [0.0] * num_bones
            share = 0.5 * max(0.0, 1.0 - s / (blend * length)) if parent is not None else 0.0
            row[k] = 1.0 - share
            if share > 0.0:
                row[parent] = share
            weights.append(row)

        bottom = base + (rings_per_bone + 1) * segments
        top = bottom + 1
        for i in range(rings_per_bone):
            for j in range(segments):
                a = base + i * segments + j
                b = base + i * segments + (j + 1) % segments
                c = base + (i + 1) * segments + (j + 1) % segments
                d = base + (i + 1) * segments + j
                faces.append((a, b, c))
                faces.append((a, c, d))
        last = base + rings_per_bone * segments
        for j in range(segments):
            faces.append((bottom, base + (j + 1) % segments, base + j))
            faces.append((top, last + j, last + (j + 1) % segments))

    mesh = SkinnedMesh(
        torch.tensor(vertices, dtype=DTYPE),
        torch.tensor(faces, dtype=torch.int64),
        torch.tensor(weights, dtype=DTYPE),
    )
    return SkeletalShape(mesh, tree).validate()


def quadruped_shape(**kwargs) -> SkeletalShape:
    return rigged_tubes(quadruped_tree(), **kwargs)


def random_tree(rng: np.random.Generator, num_bones: int, max_offset: float = 1.5) -> KinematicTree:
    parents = [None] + [int(rng.integers(0, k)) for k in range(1, num_bones)]
    offsets = [0.0] + list(rng.uniform(0.2, max_offset, size=num_bones - 1))
    segments = rng.uniform(0.0, max_offset, size=num_bones)
    return KinematicTree(
        tuple(parents),
        torch.tensor(offsets, dtype=DTYPE),
        torch.tensor(segments, dtype=DTYPE),
        quaternion.random_unit(rng, num_bones),
    ).validate()


def random_rotation(rng: np.random.Generator, max_angle: float) -> torch.Tensor:
    """Unit quaternion about a random axis by an angle drawn from [0, max_angle] radians"""
    axis = rng.normal(size=3)
    return quaternion.from_axis_angle(axis, float(rng.uniform(0.0, max_angle)))


def perturbed_poses(
    rng: np.random.Generator,
    num_bones: int,
    num_frames: int,
    max_angle: float,
    root: Optional[RigidTransform] = None,
) -> PoseSequence:
    """Every joint of every frame rotated by at most ``max_angle`` from rest"""
    root = root or RigidTransform.identity()
    frames = []
    for _ in range(num_frames):
        joints = torch.stack([random_rotation(rng, max_angle) for _ in range(num_bones)])
        frames.append(FramePose(root, joints))
    return PoseSequence.from_frames(frames)
