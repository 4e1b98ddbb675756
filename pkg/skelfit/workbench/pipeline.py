# File: skelfit/workbench/pipeline.py
"""
End-to-end workflows behind the command line and the batch runner. Each function reads its
inputs from files, runs one pipeline stage and writes its artifacts; results are returned
for reporting. Nothing here prints or exits.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import torch

from .codecs import read_embeddings, read_manifest, read_points, read_camera
from .observations import ObservationSequence
from .settings import Settings, load_settings
from .shape_file import ShapeFile, load_poses, load_shape, save_shape
from .synth import load_observations, synth_observations
from ..log import log
from ..utils import seed_everything
from ..metrics import (
    MetricReport,
    joint_cd,
    mean_chamfer,
    miou,
    reanimation_error,
    scale_search,
    skinning_distance,
    union_bounds,
    voxelize,
)
from ..optim import FitResult, GradcheckReport, fit, run_gradcheck
from ..reanimate import RetargetResult, export_playback, retarget
from ..retrieval import build_index, nearest, query_sequence
from ..skeleton import (
    FramePose,
    PoseSequence,
    RigidTransform,
    ShapeParams,
    deform_prepared,
    pose_bones,
    prepare,
    primitives,
    quaternion,
)
from .._constant import HISTORY_HEADER
from ..exception import InvalidInputException


def _params_or_identity(loaded: ShapeFile) -> ShapeParams:
    """Stored parameters, or the ones that reproduce the template exactly"""
    return loaded.params if loaded.params is not None else ShapeParams.initial(loaded.shape)


# --- retrieve --------------------------------------------------------------------------

def retrieve(index_path: str, query_path: str, k: int = 5) -> List[Tuple[str, float]]:
    entries = read_manifest(index_path)
    index = build_index(
        (item_id, read_embeddings(embedding), shape) for item_id, (embedding, shape) in sorted(entries.items())
    )
    ranked = nearest(index, query_sequence(read_embeddings(query_path)), k)
    log.info("retrieved", len(ranked), "of", len(index), "items; best", ranked[0][0] if ranked else None)
    return ranked


# --- fit -------------------------------------------------------------------------------

def history_path_for(out_path: str) -> str:
    stem, _ = os.path.splitext(out_path)
    return f"{stem}.history.csv"


def write_history(path: str, rows) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(HISTORY_HEADER.split(","))
        for row in rows:
            writer.writerow([int(row[0])] + [f"{v:.17g}" for v in row[1:]])


def run_fit(
    shape_path: str,
    obs_dir: str,
    out_path: str,
    config_path: Optional[str] = None,
    settings: Optional[Settings] = None,
) -> FitResult:
    """Fits, then writes the shape file (params + poses) and ``<out>.history.csv``"""
    settings = settings or load_settings(config_path)
    loaded = load_shape(shape_path)
    observations = load_observations(obs_dir)
    roots = loaded.poses if loaded.poses is not None and loaded.poses.num_frames == observations.num_frames else None
    if loaded.poses is not None and roots is None:
        log.warning(
            f"shape file carries {loaded.poses.num_frames} poses for {observations.num_frames} frames; roots ignored"
        )
    seed_everything(settings.fit.seed)
    result = fit(loaded.shape, observations, settings.fit, roots=roots)
    save_shape(out_path, loaded.shape, result.params, result.poses)
    write_history(history_path_for(out_path), result.history_rows())
    log.info("fit written to", out_path, "final energy", f"{float(result.final.total):.6g}")
    return result


# --- reanimate -------------------------------------------------------------------------

def run_reanimate(
    shape_path: str,
    target_path: str,
    out_path: str,
    config_path: Optional[str] = None,
    playback_dir: Optional[str] = None,
) -> RetargetResult:
    """Retargets the fitted shape onto the target points; the pose is stored as a one-frame sequence"""
    settings = load_settings(config_path)
    loaded = load_shape(shape_path)
    params = _params_or_identity(loaded)
    target = read_points(target_path)
    initial = loaded.poses.frame(0) if loaded.poses is not None else None
    result = retarget(loaded.shape, params, target, settings.retarget, initial)
    poses = PoseSequence.from_frames([result.pose])
    save_shape(out_path, loaded.shape, params, poses)
    if playback_dir:
        export_playback(loaded.shape, params, poses, playback_dir)
    return result


# --- eval ------------------------------------------------------------------------------

@dataclass(frozen=True)
class PosedModel:
    vertices: np.ndarray
    faces: np.ndarray
    joints: np.ndarray
    weights: np.ndarray


def posed_model(loaded: ShapeFile) -> PosedModel:
    """Surface, joints and weights at the first stored pose (rest pose when none)"""
    params = _params_or_identity(loaded)
    frame = loaded.poses.frame(0) if loaded.poses is not None else FramePose.rest(loaded.shape.num_bones)
    with torch.no_grad():
        prepared = prepare(loaded.shape, params)
        vertices = deform_prepared(prepared, frame)
        bones = pose_bones(prepared, frame)
    return PosedModel(
        vertices.numpy(),
        loaded.shape.mesh.faces.numpy(),
        bones.heads.numpy(),
        prepared.weights.detach().numpy(),
    )


def evaluate(
    pred_path: str,
    gt_path: str,
    with_scale_search: bool = False,
    resolution: int = 64,
    config_path: Optional[str] = None,
) -> MetricReport:
    """
    Full metric suite of a predicted shape file against a reference. With ``with_scale_search``
    the prediction is rescaled about the origin by the IoU-maximizing factor before every metric.
    """
    settings = load_settings(config_path)
    pred_file, ref_file = load_shape(pred_path), load_shape(gt_path)
    pred, ref = posed_model(pred_file), posed_model(ref_file)
    scale = 1.0
    if with_scale_search:
        bounds = union_bounds(ref.vertices)
        ref_grid = voxelize(ref.vertices, ref.faces, bounds, resolution)
        scale, _ = scale_search(pred.vertices, pred.faces, ref_grid)
        log.info("scale search picked", f"{scale:.6g}")
    pred_vertices = pred.vertices * scale
    bounds = union_bounds(pred_vertices, ref.vertices)
    iou = miou(voxelize(pred_vertices, pred.faces, bounds, resolution), voxelize(ref.vertices, ref.faces, bounds, resolution))

    # retarget in the unscaled frame; squared distances scale by scale²
    initial = pred_file.poses.frame(0) if pred_file.poses is not None else None
    report = MetricReport(
        miou=iou,
        mcham=mean_chamfer(pred_vertices, ref.vertices),
        joint_cd=joint_cd(pred.joints * scale, ref.joints),
        skinning_dist=skinning_distance(pred_vertices, pred.weights, ref.vertices, ref.weights),
        reanimation_err=scale ** 2 * reanimation_error(
            pred_file.shape, _params_or_identity(pred_file), torch.as_tensor(ref.vertices / scale),
            settings.retarget, initial,
        ),
    )
    return report.validate()


# --- synth -----------------------------------------------------------------------------

def run_synth(
    shape_path: str,
    camera_path: str,
    out_dir: str,
    poses_path: Optional[str] = None,
) -> ObservationSequence:
    """Poses come from ``poses_path`` or, when omitted, from the shape file itself"""
    loaded = load_shape(shape_path)
    if poses_path is not None:
        poses = load_poses(poses_path, loaded.shape.num_bones)
    elif loaded.poses is not None:
        poses = loaded.poses
    else:
        raise InvalidInputException("no poses given and the shape file carries none", field="poses")
    camera = read_camera(camera_path)
    return synth_observations(loaded.shape, _params_or_identity(loaded), poses, camera, out_dir)


# --- templates -------------------------------------------------------------------------

TEMPLATE_KINDS = ("tube", "quadruped", "cube")


def create_template(
    kind: str,
    out_path: str,
    num_bones: int = 3,
    num_frames: int = 0,
    max_angle: float = 0.3,
    seed: int = 0,
    distance: float = 0.0,
) -> ShapeFile:
    """
    Writes a procedural template shape file. With ``num_frames`` > 0 it also carries a seeded
    pose sequence whose root sits ``distance`` along +z, ready for ``run_synth``.
    """
    if kind == "tube":
        if num_bones < 1:
            raise InvalidInputException("need at least one bone", field="bones")
        shape = primitives.tube_shape(num_bones=num_bones)
    elif kind == "quadruped":
        shape = primitives.quadruped_shape()
    elif kind == "cube":
        shape = primitives.cube_shape(-0.5, 0.5)
    else:
        raise InvalidInputException(f"unknown template {kind!r}, expected one of {TEMPLATE_KINDS}", field="kind")
    if num_frames < 0:
        raise InvalidInputException("frame count must be >= 0", field="frames")
    poses = None
    if num_frames > 0:
        root = RigidTransform(quaternion.identity(), torch.tensor([0.0, 0.0, distance], dtype=torch.float64))
        poses = primitives.perturbed_poses(np.random.default_rng(seed), shape.num_bones, num_frames, max_angle, root)
    save_shape(out_path, shape, poses=poses)
    log.info("template", kind, "written to", out_path, "bones", shape.num_bones, "frames", num_frames)
    return ShapeFile(shape, None, poses)


# --- gradcheck -------------------------------------------------------------------------

def run_gradient_suite(seed: int = 0, scenes: int = 10, samples: int = 3) -> GradcheckReport:
    report = run_gradcheck(seed=seed, scenes=scenes, samples=samples)
    log.info("gradcheck", len(report.cases), "cases,", len(report.failures), "failed")
    return report
