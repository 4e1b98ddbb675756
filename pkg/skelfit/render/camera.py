# File: skelfit/render/camera.py
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Tuple, Union

import torch

from ..skeleton import quaternion
from .._constant import DEPTH_EPSILON, DTYPE
from ..exception import InvalidInputException

Scalar = Union[float, torch.Tensor]


@dataclass(frozen=True)
class Camera:
    """
    Pinhole camera. Intrinsics in pixels; ``rotation``/``translation`` map world points into
    the camera frame (identity by default, i.e. points are already camera-frame).
    Intrinsics may be 0-d tensors so camera search can differentiate through them.
    """

    fx: Scalar
    fy: Scalar
    cx: Scalar
    cy: Scalar
    width: int
    height: int
    rotation: torch.Tensor = field(default_factory=quaternion.identity)
    translation: torch.Tensor = field(default_factory=lambda: torch.zeros(3, dtype=DTYPE))

    @property
    def ndc_scale(self) -> float:
        """Pixel distance → normalized device units"""
        return 2.0 / min(self.width, self.height)

    def world_to_camera(self, points: torch.Tensor) -> torch.Tensor:
        rotation = quaternion.to_matrix(quaternion.normalize(self.rotation))
        return points @ rotation.transpose(-1, -2) + self.translation

    def with_extrinsics(self, rotation: torch.Tensor, translation: torch.Tensor) -> "Camera":
        return replace(self, rotation=rotation, translation=translation)

    def with_intrinsics(self, fx: Scalar, fy: Scalar, cx: Scalar, cy: Scalar) -> "Camera":
        return replace(self, fx=fx, fy=fy, cx=cx, cy=cy)

    def detach(self) -> "Camera":
        def plain(value):
            return float(value.detach()) if isinstance(value, torch.Tensor) else float(value)
        return replace(
            self,
            fx=plain(self.fx), fy=plain(self.fy), cx=plain(self.cx), cy=plain(self.cy),
            rotation=self.rotation.detach().clone(), translation=self.translation.detach().clone(),
        )

    def validate(self) -> "Camera":
        if not float(self.fx) > 0 or not float(self.fy) > 0:
            raise InvalidInputException("focal lengths must be positive", field="camera.fx/fy")
        if int(self.width) < 1 or int(self.height) < 1:
            raise InvalidInputException("image size must be at least 1x1", field="camera.width/height")
        quaternion.check_unit(self.rotation, "camera.rotation")
        return self


def project(points: torch.Tensor, cam: Camera) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """
    Camera-frame points (M, 3) to pixel coordinates (M, 2), depths (M,) and a validity
    mask (M,); points with z <= eps are flagged invalid and their pixels are meaningless.
    """
    z = points[:, 2]
    valid = z > DEPTH_EPSILON
    safe_z = torch.where(valid, z, torch.ones_like(z))
    u = cam.fx * points[:, 0] / safe_z + cam.cx
    v = cam.fy * points[:, 1] / safe_z + cam.cy
    return torch.stack([u, v], dim=-1), z, valid
