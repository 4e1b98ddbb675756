# File: skelfit/workbench/shape_file.py
"""
Shape documents: one JSON file holding a skeletal shape and, optionally, fitted shape
parameters and a pose sequence. Floats are written with their shortest round-trip
representation, so load(save(x)) reproduces every finite value exactly.

    {
      "schema_version": 1,
      "vertices": [[x, y, z], ...], "faces": [[a, b, c], ...], "skinning": [[w, ...], ...],
      "parents": [null, 0, ...], "offset_lengths": [...], "segment_lengths": [...],
      "rest_rotations": [[x, y, z, w], ...],
      "params": {"scale": u, "bone_scales": [...], "skin_logits": [[...]],
                 "displacement": {"weights": [...], "biases": [...]}},
      "poses": {"root_rotations": [...], "root_translations": [...], "joints": [...]}
    }
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch

from ..guard import skelfit_guard
from ..log import log
from ..skeleton import (
    DisplacementField,
    KinematicTree,
    PoseSequence,
    ShapeParams,
    SkeletalShape,
    SkinnedMesh,
)
from .._constant import DTYPE, SHAPE_SCHEMA_VERSION
from ..exception import InvalidInputException, SchemaException, WorkbenchException

_SHAPE_KEYS = {
    "schema_version", "vertices", "faces", "skinning", "parents",
    "offset_lengths", "segment_lengths", "rest_rotations", "params", "poses",
}
_PARAM_KEYS = {"scale", "bone_scales", "skin_logits", "displacement"}
_POSE_KEYS = {"root_rotations", "root_translations", "joints"}


@dataclass(frozen=True)
class ShapeFile:
    shape: SkeletalShape
    params: Optional[ShapeParams] = None
    poses: Optional[PoseSequence] = None


def _path_context(path, *args, **kwargs):
    return f"while accessing shape file '{path}'"


def _check_keys(doc, allowed, field: str) -> None:
    if not isinstance(doc, dict):
        raise SchemaException("expected an object", field=field)
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise SchemaException("unknown field", field=f"{field}.{unknown[0]}" if field else unknown[0])


def _array(doc, key: str, field: str, ndim: int, width: Optional[int] = None, dtype=np.float64) -> np.ndarray:
    path = f"{field}.{key}" if field else key
    if key not in doc:
        raise SchemaException("missing field", field=path)
    return _to_array(doc[key], path, ndim, width, dtype)


def _to_array(value, path: str, ndim: int, width: Optional[int] = None, dtype=np.float64) -> np.ndarray:
    try:
        array = np.asarray(value, dtype=dtype)
    except (TypeError, ValueError):
        raise SchemaException("expected a rectangular numeric array", field=path)
    if array.size == 0:
        array = array.reshape((0,) * (ndim - 1) + ((width or 0),) if ndim > 1 else (0,))
    if array.ndim != ndim or (width is not None and array.shape[-1] != width):
        expected = f"{ndim}-d" + (f" with rows of {width}" if width is not None else "")
        raise SchemaException(f"expected a {expected} array, got shape {array.shape}", field=path)
    if dtype == np.float64 and not np.isfinite(array).all():
        raise SchemaException("non-finite value", field=path)
    return array


def _tensor(array: np.ndarray, dtype=DTYPE) -> torch.Tensor:
    return torch.as_tensor(array, dtype=dtype)


def _parents(doc) -> tuple:
    if "parents" not in doc or not isinstance(doc["parents"], list):
        raise SchemaException("expected a list of parent indices", field="parents")
    parents = []
    for i, p in enumerate(doc["parents"]):
        if p is None or (isinstance(p, int) and not isinstance(p, bool) and p < 0):
            parents.append(None)
        elif isinstance(p, int) and not isinstance(p, bool):
            parents.append(p)
        else:
            raise SchemaException(f"expected an integer or null, got {p!r}", field=f"parents[{i}]")
    return tuple(parents)


def _shape_from_doc(doc) -> SkeletalShape:
    tree = KinematicTree(
        parents=_parents(doc),
        offset_lengths=_tensor(_array(doc, "offset_lengths", "", 1)),
        segment_lengths=_tensor(_array(doc, "segment_lengths", "", 1)),
        rest_rotations=_tensor(_array(doc, "rest_rotations", "", 2, 4)),
    )
    mesh = SkinnedMesh(
        vertices=_tensor(_array(doc, "vertices", "", 2, 3)),
        faces=_tensor(_array(doc, "faces", "", 2, 3, dtype=np.int64), dtype=torch.int64),
        skinning=_tensor(_array(doc, "skinning", "", 2)),
    )
    return SkeletalShape(mesh, tree).validate()


def _params_from_doc(doc, shape: SkeletalShape) -> ShapeParams:
    _check_keys(doc, _PARAM_KEYS, "params")
    field_doc = doc.get("displacement")
    _check_keys(field_doc, {"weights", "biases"}, "params.displacement")
    weights, biases = field_doc.get("weights"), field_doc.get("biases")
    if not isinstance(weights, list) or not isinstance(biases, list):
        raise SchemaException("expected per-layer weight and bias lists", field="params.displacement")
    layers = {"weights": [], "biases": []}
    for key, values, ndim in (("weights", weights, 2), ("biases", biases, 1)):
        for i, layer in enumerate(values):
            layers[key].append(_tensor(_to_array(layer, f"params.displacement.{key}[{i}]", ndim)))
    scale = doc.get("scale")
    if isinstance(scale, bool) or not isinstance(scale, (int, float)):
        raise SchemaException("expected a number", field="params.scale")
    params = ShapeParams(
        scale=torch.tensor(float(scale), dtype=DTYPE),
        bone_scales=_tensor(_array(doc, "bone_scales", "params", 1)),
        displacement=DisplacementField(tuple(layers["weights"]), tuple(layers["biases"])),
        skin_logits=_tensor(_array(doc, "skin_logits", "params", 2)),
    )
    return params.validate(shape)


def _poses_from_doc(doc, num_bones: Optional[int]) -> PoseSequence:
    _check_keys(doc, _POSE_KEYS, "poses")
    poses = PoseSequence(
        root_rotations=_tensor(_array(doc, "root_rotations", "poses", 2, 4)),
        root_translations=_tensor(_array(doc, "root_translations", "poses", 2, 3)),
        joints=_tensor(_array(doc, "joints", "poses", 3, 4)),
    )
    return poses.validate(num_bones)


def _matrix(tensor: torch.Tensor) -> list:
    return tensor.detach().cpu().tolist()


def shape_document(shape: SkeletalShape, params: Optional[ShapeParams] = None, poses: Optional[PoseSequence] = None) -> dict:
    tree, mesh = shape.tree, shape.mesh
    doc = {
        "schema_version": SHAPE_SCHEMA_VERSION,
        "vertices": _matrix(mesh.vertices),
        "faces": _matrix(mesh.faces.to(torch.int64)),
        "skinning": _matrix(mesh.skinning),
        "parents": list(tree.parents),
        "offset_lengths": _matrix(tree.offset_lengths),
        "segment_lengths": _matrix(tree.segment_lengths),
        "rest_rotations": _matrix(tree.rest_rotations),
    }
    if params is not None:
        doc["params"] = {
            "scale": float(params.scale.detach()),
            "bone_scales": _matrix(params.bone_scales),
            "skin_logits": _matrix(params.skin_logits),
            "displacement": {
                "weights": [_matrix(w) for w in params.displacement.weights],
                "biases": [_matrix(b) for b in params.displacement.biases],
            },
        }
    if poses is not None:
        doc["poses"] = poses_document(poses)
    return doc


def poses_document(poses: PoseSequence) -> dict:
    return {
        "root_rotations": _matrix(poses.root_rotations),
        "root_translations": _matrix(poses.root_translations),
        "joints": _matrix(poses.joints),
    }


def _read_document(path) -> dict:
    if not os.path.isfile(path):
        raise InvalidInputException(f"file not found: {path}", field="path")
    with open(path) as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise SchemaException(f"not valid JSON ({e.msg} at line {e.lineno})", field=os.path.basename(path))


@skelfit_guard(WorkbenchException, context_fn=_path_context)
def load_shape(path) -> ShapeFile:
    doc = _read_document(path)
    _check_keys(doc, _SHAPE_KEYS, "")
    version = doc.get("schema_version")
    if version != SHAPE_SCHEMA_VERSION:
        raise SchemaException(f"unsupported version {version!r}, expected {SHAPE_SCHEMA_VERSION}", field="schema_version")
    shape = _shape_from_doc(doc)
    params = _params_from_doc(doc["params"], shape) if doc.get("params") is not None else None
    poses = _poses_from_doc(doc["poses"], shape.num_bones) if doc.get("poses") is not None else None
    log.debug(
        "loaded shape", path, "vertices", shape.mesh.num_vertices, "bones", shape.num_bones,
        "params", params is not None, "frames", poses.num_frames if poses is not None else 0,
    )
    return ShapeFile(shape, params, poses)


@skelfit_guard(WorkbenchException, context_fn=_path_context)
def save_shape(path, shape: SkeletalShape, params: Optional[ShapeParams] = None, poses: Optional[PoseSequence] = None) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w") as f:
        json.dump(shape_document(shape, params, poses), f)
    log.debug("saved shape", path)


@skelfit_guard(WorkbenchException, context_fn=_path_context)
def load_poses(path, num_bones: Optional[int] = None) -> PoseSequence:
    """A bare pose document, or the "poses" block of a shape file"""
    doc = _read_document(path)
    if isinstance(doc, dict) and "poses" in doc and "joints" not in doc:
        doc = doc["poses"]
        if doc is None:
            raise SchemaException("shape file carries no poses", field="poses")
    return _poses_from_doc(doc, num_bones)


@skelfit_guard(WorkbenchException, context_fn=_path_context)
def save_poses(path, poses: PoseSequence) -> None:
    with open(path, "w") as f:
        json.dump(poses_document(poses), f)


def shapes_equal(a: ShapeFile, b: ShapeFile) -> bool:
    """Exact equality of every stored value"""
    def same(x: Sequence[torch.Tensor], y: Sequence[torch.Tensor]) -> bool:
        return len(x) == len(y) and all(
            p.shape == q.shape and torch.equal(p.to(q.dtype), q) for p, q in zip(x, y)
        )

    def shape_tensors(f: ShapeFile):
        m, t = f.shape.mesh, f.shape.tree
        return [m.vertices, m.faces, m.skinning, t.offset_lengths, t.segment_lengths, t.rest_rotations]

    if a.shape.tree.parents != b.shape.tree.parents or not same(shape_tensors(a), shape_tensors(b)):
        return False
    if (a.params is None) != (b.params is None) or (a.poses is None) != (b.poses is None):
        return False
    if a.params is not None:
        pa, pb = a.params, b.params
        if not same(
            [pa.scale, pa.bone_scales, pa.skin_logits, *pa.displacement.parameters()],
            [pb.scale, pb.bone_scales, pb.skin_logits, *pb.displacement.parameters()],
        ):
            return False
    if a.poses is not None:
        qa, qb = a.poses, b.poses
        return same(
            [qa.root_rotations, qa.root_translations, qa.joints],
            [qb.root_rotations, qb.root_translations, qb.joints],
        )
    return True
