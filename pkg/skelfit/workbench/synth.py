# File: skelfit/workbench/synth.py
"""
Observation directories: mask_%04d.pgm per frame, flow_%04d.flo between consecutive
frames and camera.json. ``synth_observations`` renders one from a posed shape with the hard
rasterizer and the exact flow renderer; ``load_observations`` reads one back.
"""

from __future__ import annotations

import glob
import os
from typing import List, Optional

import torch

from .codecs import frame_paths, read_camera, read_flo, read_pgm, write_camera, write_flo, write_pgm
from .observations import ObservationSequence
from ..guard import skelfit_guard
from ..log import log
from ..render import Camera, FlowMap, rasterize_hard, render_flow
from ..skeleton import PoseSequence, ShapeParams, SkeletalShape, deform_sequence
from ..exception import InvalidInputException, WorkbenchException

MASK_PATTERN = "mask_%04d.pgm"
FLOW_PATTERN = "flow_%04d.flo"
RGB_PATTERN = "frame_%04d.png"
CAMERA_FILE = "camera.json"


def _dir_context(*args, **kwargs):
    directory = kwargs.get("directory") or kwargs.get("out_dir") or next((a for a in args if isinstance(a, str)), "?")
    return f"while accessing observation directory '{directory}'"


def render_observations(
    shape: SkeletalShape,
    params: ShapeParams,
    poses: PoseSequence,
    camera: Camera,
) -> ObservationSequence:
    """Hard masks and exact flows of the posed shape, in memory"""
    faces = shape.mesh.faces
    with torch.no_grad():
        frames = deform_sequence(shape, params.detach(), poses.detach())
        masks = [rasterize_hard(v, faces, camera) for v in frames]
        flows: List[FlowMap] = [
            render_flow(frames[t], frames[t + 1], faces, camera).detach() for t in range(len(frames) - 1)
        ]
    return ObservationSequence.build(masks, flows, camera.detach())


@skelfit_guard(WorkbenchException, context_fn=_dir_context)
def write_observations(observations: ObservationSequence, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for t in range(observations.num_frames):
        write_pgm(os.path.join(out_dir, MASK_PATTERN % t), observations.masks[t])
    for t, flow in enumerate(observations.flows):
        write_flo(os.path.join(out_dir, FLOW_PATTERN % t), flow)
    write_camera(os.path.join(out_dir, CAMERA_FILE), observations.camera)


def synth_observations(
    shape: SkeletalShape,
    params: ShapeParams,
    poses: PoseSequence,
    camera: Camera,
    out_dir: str,
) -> ObservationSequence:
    """Renders, writes and reloads, so the result is exactly what a later load sees"""
    camera.validate()
    poses.validate(shape.num_bones)
    rendered = render_observations(shape, params, poses, camera)
    write_observations(rendered, out_dir)
    log.info("synthesized", rendered.num_frames, "frames", f"{camera.width}x{camera.height}", "into", out_dir)
    return load_observations(out_dir)


@skelfit_guard(WorkbenchException, context_fn=_dir_context)
def load_observations(directory: str, num_frames: Optional[int] = None) -> ObservationSequence:
    """
    Frames are counted from consecutive mask files starting at 0 unless ``num_frames`` is
    given. Every flow up to the last frame must exist; PNG frames are recorded when present.
    """
    if not os.path.isdir(directory):
        raise InvalidInputException(f"not a directory: {directory}", field="obs")
    if num_frames is None:
        num_frames = 0
        while os.path.isfile(os.path.join(directory, MASK_PATTERN % num_frames)):
            num_frames += 1
        stray = len(glob.glob(os.path.join(directory, "mask_*.pgm")))
        if stray != num_frames:
            raise InvalidInputException(
                f"mask files are not numbered consecutively from 0 ({stray} found, {num_frames} in sequence)",
                field="obs",
            )
    if num_frames < 1:
        raise InvalidInputException(f"no {MASK_PATTERN % 0} in {directory}", field="obs")
    for kind, paths in (("mask", frame_paths(directory, MASK_PATTERN, num_frames)),
                        ("flow", frame_paths(directory, FLOW_PATTERN, num_frames - 1))):
        missing = [p for p in paths if not os.path.isfile(p)]
        if missing:
            raise InvalidInputException(f"missing {kind} frame {os.path.basename(missing[0])}", field="obs")

    masks = [read_pgm(p) for p in frame_paths(directory, MASK_PATTERN, num_frames)]
    sizes = {tuple(m.shape) for m in masks}
    if len(sizes) != 1:
        raise InvalidInputException(f"masks differ in size: {sorted(sizes)}", field="obs.masks")
    flows = [read_flo(p) for p in frame_paths(directory, FLOW_PATTERN, num_frames - 1)]
    camera = read_camera(os.path.join(directory, CAMERA_FILE))
    rgb = [p for p in frame_paths(directory, RGB_PATTERN, num_frames) if os.path.isfile(p)]
    log.debug("loaded observations", directory, "frames", num_frames)
    return ObservationSequence.build(torch.stack(masks), flows, camera, rgb)
