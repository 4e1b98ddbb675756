# File: skelfit/metrics/reanimation.py
from __future__ import annotations

from typing import Optional

from ..reanimate import RetargetConfig, retarget
from ..skeleton import FramePose, ShapeParams, SkeletalShape


def reanimation_error(
    shape: SkeletalShape,
    params: ShapeParams,
    target_vertices,
    config: Optional[RetargetConfig] = None,
    initial: Optional[FramePose] = None,
) -> float:
    """Chamfer left after retargeting the fitted shape onto ``target_vertices``"""
    return retarget(shape, params, target_vertices, config, initial).chamfer
