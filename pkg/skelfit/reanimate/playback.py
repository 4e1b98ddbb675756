# File: skelfit/reanimate/playback.py
from __future__ import annotations

import os
from typing import List

import torch

from ..log import log
from ..skeleton import PoseSequence, ShapeParams, SkeletalShape, deform_sequence


def pose_playback(shape: SkeletalShape, params: ShapeParams, poses: PoseSequence) -> List[torch.Tensor]:
    """Deformed vertices per frame; no graph is kept"""
    with torch.no_grad():
        return [v.detach() for v in deform_sequence(shape, params.detach(), poses.detach())]


def export_playback(shape: SkeletalShape, params: ShapeParams, poses: PoseSequence, out_dir: str) -> List[str]:
    """Writes frame_%04d.obj per frame into ``out_dir``"""
    from ..workbench.codecs import write_obj

    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for t, vertices in enumerate(pose_playback(shape, params, poses)):
        path = os.path.join(out_dir, f"frame_{t:04d}.obj")
        write_obj(path, vertices, shape.mesh.faces)
        paths.append(path)
    log.info("exported playback", len(paths), "frames to", out_dir)
    return paths
