# File: skelfit/skeleton/types.py
"""
Value types of the articulation model.

Every type is a frozen dataclass over float64 tensors. Constructors do not validate;
call ``validate()`` at trust boundaries (loaders, builders). Optimization code builds
intermediate values freely without paying for the checks.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import torch

from . import quaternion
from .displacement import DisplacementField
from .._constant import DTYPE, SIMPLEX_TOLERANCE, UNIT_TOLERANCE
from ..exception import InvalidInputException


def _as_tensor(values, dtype=DTYPE) -> torch.Tensor:
    return torch.as_tensor(values, dtype=dtype)


@dataclass(frozen=True)
class KinematicTree:
    """Bones in topological order; ``parents[k]`` is None only for the root"""

    parents: Tuple[Optional[int], ...]
    offset_lengths: torch.Tensor   # (K,) translation from the parent joint along its z axis
    segment_lengths: torch.Tensor  # (K,) joint to distal endpoint
    rest_rotations: torch.Tensor   # (K, 4)

    @property
    def num_bones(self) -> int:
        return len(self.parents)

    @property
    def root(self) -> int:
        return self.parents.index(None)

    @classmethod
    def from_offsets(
        cls,
        parents: Sequence[Optional[int]],
        offset_lengths: Sequence[float],
        rest_rotations=None,
        tip_length: Optional[float] = None,
    ) -> "KinematicTree":
        """
        Build a tree the way rigs are imported: a bone's segment reaches its first child
        joint; leaves get ``tip_length`` (default: their own offset length).
        """
        parents = tuple(None if p is None or p < 0 else int(p) for p in parents)
        offsets = _as_tensor(offset_lengths)
        segments = torch.zeros_like(offsets)
        for k in range(len(parents)):
            kids = [j for j, p in enumerate(parents) if p == k]
            if kids:
                segments[k] = offsets[kids[0]]
            else:
                segments[k] = offsets[k] if tip_length is None else tip_length
        if rest_rotations is None:
            rest_rotations = quaternion.identity(len(parents))
        return cls(parents, offsets, segments, _as_tensor(rest_rotations)).validate()

    def validate(self) -> "KinematicTree":
        k = self.num_bones
        if k == 0:
            raise InvalidInputException("tree has no bones", field="tree.parents")
        roots = [i for i, p in enumerate(self.parents) if p is None]
        if len(roots) != 1:
            raise InvalidInputException(f"expected exactly one root, found {len(roots)}", field="tree.parents")
        for i, p in enumerate(self.parents):
            if p is not None and not (0 <= p < i):
                raise InvalidInputException(
                    f"parent {p} of bone {i} breaks topological order (cycle or forward reference)",
                    field=f"tree.parents[{i}]",
                )
        for name, tensor, shape in (
            ("offset_lengths", self.offset_lengths, (k,)),
            ("segment_lengths", self.segment_lengths, (k,)),
            ("rest_rotations", self.rest_rotations, (k, 4)),
        ):
            if tuple(tensor.shape) != shape:
                raise InvalidInputException(f"expected shape {shape}, got {tuple(tensor.shape)}", field=f"tree.{name}")
            if not torch.isfinite(tensor).all():
                raise InvalidInputException("non-finite value", field=f"tree.{name}")
        for i, p in enumerate(self.parents):
            length = self.offset_lengths[i].item()
            if p is None and length != 0.0:
                raise InvalidInputException("root offset length must be 0", field=f"tree.offset_lengths[{i}]")
            if p is not None and not length > 0.0:
                raise InvalidInputException("non-root offset length must be > 0", field=f"tree.offset_lengths[{i}]")
        if (self.segment_lengths < 0).any():
            bad = int(torch.nonzero(self.segment_lengths < 0)[0])
            raise InvalidInputException("segment length must be >= 0", field=f"tree.segment_lengths[{bad}]")
        quaternion.check_unit(self.rest_rotations, "tree.rest_rotations", UNIT_TOLERANCE)
        return self


@dataclass(frozen=True)
class SkinnedMesh:
    vertices: torch.Tensor  # (N, 3) canonical pose
    faces: torch.Tensor     # (T, 3) int64
    skinning: torch.Tensor  # (N, K) rows on the simplex

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    def validate(self) -> "SkinnedMesh":
        n = self.vertices.shape[0]
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise InvalidInputException(f"expected (N, 3), got {tuple(self.vertices.shape)}", field="mesh.vertices")
        if not torch.isfinite(self.vertices).all():
            raise InvalidInputException("non-finite vertex", field="mesh.vertices")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise InvalidInputException(f"expected (T, 3), got {tuple(self.faces.shape)}", field="mesh.faces")
        if self.faces.numel():
            out_of_range = (self.faces < 0) | (self.faces >= n)
            if out_of_range.any():
                row = int(torch.nonzero(out_of_range.any(dim=1))[0])
                raise InvalidInputException(f"index out of [0, {n})", field=f"mesh.faces[{row}]")
            f = self.faces
            degenerate = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
            if degenerate.any():
                row = int(torch.nonzero(degenerate)[0])
                raise InvalidInputException("degenerate face (repeated index)", field=f"mesh.faces[{row}]")
        if self.skinning.ndim != 2 or self.skinning.shape[0] != n:
            raise InvalidInputException(f"expected ({n}, K), got {tuple(self.skinning.shape)}", field="mesh.skinning")
        if (self.skinning < 0).any():
            row = int(torch.nonzero((self.skinning < 0).any(dim=1))[0])
            raise InvalidInputException("negative skinning weight", field=f"mesh.skinning[{row}]")
        sums = self.skinning.sum(dim=1)
        off = torch.abs(sums - 1.0) > SIMPLEX_TOLERANCE
        if off.any():
            row = int(torch.nonzero(off)[0])
            raise InvalidInputException(
                f"weights sum to {sums[row].item():.9g}, expected 1", field=f"mesh.skinning[{row}]"
            )
        return self


@dataclass(frozen=True)
class SkeletalShape:
    """Mesh + kinematic tree; everything of a deformed shape except per-frame joint angles"""

    mesh: SkinnedMesh
    tree: KinematicTree

    @property
    def num_bones(self) -> int:
        return self.tree.num_bones

    def validate(self) -> "SkeletalShape":
        self.tree.validate()
        self.mesh.validate()
        if self.mesh.skinning.shape[1] != self.tree.num_bones:
            raise InvalidInputException(
                f"skinning has {self.mesh.skinning.shape[1]} columns for {self.tree.num_bones} bones",
                field="mesh.skinning",
            )
        return self


@dataclass(frozen=True)
class RigidTransform:
    rotation: torch.Tensor     # (4,) unit quaternion
    translation: torch.Tensor  # (3,)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(quaternion.identity(), torch.zeros(3, dtype=DTYPE))

    def apply(self, points: torch.Tensor) -> torch.Tensor:
        return points @ quaternion.to_matrix(self.rotation).transpose(-1, -2) + self.translation


@dataclass(frozen=True)
class FramePose:
    root: RigidTransform
    joints: torch.Tensor  # (K, 4)

    @classmethod
    def rest(cls, num_bones: int) -> "FramePose":
        return cls(RigidTransform.identity(), quaternion.identity(num_bones))


@dataclass(frozen=True)
class PoseSequence:
    root_rotations: torch.Tensor     # (T, 4)
    root_translations: torch.Tensor  # (T, 3)
    joints: torch.Tensor             # (T, K, 4)

    @property
    def num_frames(self) -> int:
        return self.joints.shape[0]

    def frame(self, t: int) -> FramePose:
        return FramePose(RigidTransform(self.root_rotations[t], self.root_translations[t]), self.joints[t])

    @property
    def frames(self) -> List[FramePose]:
        return [self.frame(t) for t in range(self.num_frames)]

    @classmethod
    def from_frames(cls, frames: Sequence[FramePose]) -> "PoseSequence":
        return cls(
            torch.stack([f.root.rotation for f in frames]),
            torch.stack([f.root.translation for f in frames]),
            torch.stack([f.joints for f in frames]),
        )

    @classmethod
    def rest(cls, num_frames: int, num_bones: int, root: Optional[RigidTransform] = None) -> "PoseSequence":
        root = root or RigidTransform.identity()
        return cls(
            root.rotation.expand(num_frames, 4).clone(),
            root.translation.expand(num_frames, 3).clone(),
            quaternion.identity(num_frames, num_bones),
        )

    def normalized(self) -> "PoseSequence":
        return PoseSequence(
            quaternion.normalize(self.root_rotations),
            self.root_translations,
            quaternion.normalize(self.joints),
        )

    def detach(self) -> "PoseSequence":
        return PoseSequence(
            self.root_rotations.detach().clone(),
            self.root_translations.detach().clone(),
            self.joints.detach().clone(),
        )

    def validate(self, num_bones: Optional[int] = None) -> "PoseSequence":
        t = self.joints.shape[0] if self.joints.ndim == 3 else 0
        if t < 1:
            raise InvalidInputException("pose sequence needs at least one frame", field="poses")
        if tuple(self.root_rotations.shape) != (t, 4):
            raise InvalidInputException(f"expected ({t}, 4)", field="poses.root_rotations")
        if tuple(self.root_translations.shape) != (t, 3):
            raise InvalidInputException(f"expected ({t}, 3)", field="poses.root_translations")
        if self.joints.shape[2] != 4:
            raise InvalidInputException("joint quaternions must have 4 components", field="poses.joints")
        if num_bones is not None and self.joints.shape[1] != num_bones:
            raise InvalidInputException(
                f"{self.joints.shape[1]} joints per frame for {num_bones} bones", field="poses.joints"
            )
        if not torch.isfinite(self.root_translations).all():
            raise InvalidInputException("non-finite translation", field="poses.root_translations")
        quaternion.check_unit(self.root_rotations, "poses.root_rotations")
        quaternion.check_unit(self.joints, "poses.joints")
        return self


@dataclass(frozen=True)
class ShapeParams:
    """Optimization variables shared across frames"""

    scale: torch.Tensor        # () global scale u
    bone_scales: torch.Tensor  # (K,)
    displacement: DisplacementField
    skin_logits: torch.Tensor  # (N, K)

    @classmethod
    def initial(cls, shape: SkeletalShape, seed: int = 0, hidden: int = 64) -> "ShapeParams":
        return cls(
            scale=torch.tensor(1.0, dtype=DTYPE),
            bone_scales=torch.ones(shape.num_bones, dtype=DTYPE),
            displacement=DisplacementField.initialize(hidden=hidden, seed=seed),
            skin_logits=logits_from_weights(shape.mesh.skinning),
        )

    def skinning_weights(self) -> torch.Tensor:
        return torch.softmax(self.skin_logits, dim=-1)

    def with_scale(self, scale) -> "ShapeParams":
        return replace(self, scale=_as_tensor(scale))

    def detach(self) -> "ShapeParams":
        return ShapeParams(
            self.scale.detach().clone(),
            self.bone_scales.detach().clone(),
            self.displacement.detach(),
            self.skin_logits.detach().clone(),
        )

    def validate(self, shape: Optional[SkeletalShape] = None) -> "ShapeParams":
        if self.scale.ndim != 0 or not self.scale.item() > 0:
            raise InvalidInputException("scale must be a positive scalar", field="params.scale")
        if not (self.bone_scales > 0).all():
            raise InvalidInputException("bone scales must be positive", field="params.bone_scales")
        if not torch.isfinite(self.skin_logits).all():
            raise InvalidInputException("non-finite skin logit", field="params.skin_logits")
        if shape is not None:
            if tuple(self.bone_scales.shape) != (shape.num_bones,):
                raise InvalidInputException(f"expected ({shape.num_bones},)", field="params.bone_scales")
            expected = (shape.mesh.num_vertices, shape.num_bones)
            if tuple(self.skin_logits.shape) != expected:
                raise InvalidInputException(f"expected {expected}", field="params.skin_logits")
        self.displacement.validate()
        return self


def logits_from_weights(weights: torch.Tensor, floor: float = 1e-12) -> torch.Tensor:
    """Inverse of the normalized exponential up to a per-row constant"""
    return torch.log(torch.clamp(weights.detach(), min=floor)).to(DTYPE)


@dataclass(frozen=True)
class BoneTransforms:
    rotations: torch.Tensor     # (K, 3, 3) world rotation of each bone frame
    translations: torch.Tensor  # (K, 3) world position of each bone origin
    heads: torch.Tensor         # (K, 3) c_k
    tails: torch.Tensor         # (K, 3) d_k

    @property
    def num_bones(self) -> int:
        return self.rotations.shape[0]

    def apply(self, k: int, points: torch.Tensor) -> torch.Tensor:
        return points @ self.rotations[k].transpose(-1, -2) + self.translations[k]

    def relative_to(self, rest: "BoneTransforms") -> "BoneTransforms":
        """Per-bone T ∘ rest⁻¹, mapping rest-pose points to posed points"""
        rel = self.rotations @ rest.rotations.transpose(-1, -2)
        translations = self.translations - torch.einsum("kab,kb->ka", rel, rest.translations)
        return BoneTransforms(rel, translations, self.heads, self.tails)
