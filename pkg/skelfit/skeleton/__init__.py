# File: skelfit/skeleton/__init__.py
"""
Articulation model: kinematic tree, forward kinematics, endpoint weights,
stretchable blend skinning and the displacement-field reparameterization.
"""

from .types import (
    BoneTransforms,
    FramePose,
    KinematicTree,
    PoseSequence,
    RigidTransform,
    ShapeParams,
    SkeletalShape,
    SkinnedMesh,
    logits_from_weights,
)
from .displacement import DisplacementField, apply_displacement
from .kinematics import forward_kinematics, rest_transforms
from .skinning import endpoint_weights, skin_lbs, skin_stretchable
from .deform import PreparedShape, canonical_vertices, deform, deform_prepared, deform_sequence, pose_bones, prepare
