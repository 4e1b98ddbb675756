# File: skelfit/workbench/observations.py
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Tuple

import torch

from ..render import Camera, FlowMap
from .._constant import DTYPE
from ..exception import InvalidInputException


@dataclass(frozen=True)
class ObservationSequence:
    """
    Per-frame silhouettes (T, H, W) in [0, 1], flows from each frame to the next (T − 1 maps)
    and the camera they were captured with. ``rgb_paths`` are recorded, never decoded.
    """

    masks: torch.Tensor
    flows: Tuple[FlowMap, ...]
    camera: Camera
    rgb_paths: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def num_frames(self) -> int:
        return self.masks.shape[0]

    @property
    def height(self) -> int:
        return self.masks.shape[1]

    @property
    def width(self) -> int:
        return self.masks.shape[2]

    @classmethod
    def build(cls, masks, flows: List[FlowMap], camera: Camera, rgb_paths=()) -> "ObservationSequence":
        stack = masks if isinstance(masks, torch.Tensor) else torch.stack(list(masks))
        return cls(stack.to(DTYPE), tuple(flows), camera, tuple(rgb_paths)).validate()

    def validate(self) -> "ObservationSequence":
        if self.masks.ndim != 3 or self.masks.shape[0] < 1:
            raise InvalidInputException(f"expected (T, H, W) masks, got {tuple(self.masks.shape)}", field="masks")
        if ((self.masks < 0) | (self.masks > 1)).any():
            raise InvalidInputException("mask values must lie in [0, 1]", field="masks")
        if len(self.flows) != self.num_frames - 1:
            raise InvalidInputException(
                f"{len(self.flows)} flow maps for {self.num_frames} frames, expected {self.num_frames - 1}",
                field="flows",
            )
        for t, flow in enumerate(self.flows):
            if flow.shape != (self.height, self.width):
                raise InvalidInputException(
                    f"flow is {flow.shape[1]}x{flow.shape[0]}, masks are {self.width}x{self.height}",
                    field=f"flows[{t}]",
                )
            flow.validate()
        self.camera.validate()
        if (int(self.camera.height), int(self.camera.width)) != (self.height, self.width):
            raise InvalidInputException(
                f"camera is {self.camera.width}x{self.camera.height}, masks are {self.width}x{self.height}",
                field="camera",
            )
        return self
