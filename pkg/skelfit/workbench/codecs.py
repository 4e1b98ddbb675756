# File: skelfit/workbench/codecs.py
"""
Binary and text codecs: PGM masks (P5), Middlebury flow, EMB1 embeddings, Wavefront OBJ,
plain point files, camera and index-manifest JSON. All binary formats are little-endian.
"""

from __future__ import annotations

import json
import os
import re
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from ..guard import skelfit_guard
from ..log import log
from ..render import Camera, FlowMap
from .._constant import DTYPE, EMBEDDING_MAGIC, FLO_MAGIC, FLO_UNKNOWN, FLO_UNKNOWN_THRESHOLD
from ..exception import FileFormatException, InvalidInputException, SchemaException, WorkbenchException


def _path_context(path, *args, **kwargs):
    return f"while accessing '{path}'"


def _read_bytes(path) -> bytes:
    if not os.path.isfile(path):
        raise InvalidInputException(f"file not found: {path}", field="path")
    with open(path, "rb") as f:
        return f.read()


# --- PGM -------------------------------------------------------------------------------

_PGM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*([^\s#]+)")


@skelfit_guard(WorkbenchException, context_fn=_path_context)
def read_pgm(path) -> torch.Tensor:
    """Binary graymap (P5, maxval 255) as an (H, W) tensor in [0, 1]"""
    data = _read_bytes(path)
    tokens, pos = [], 0
    for _ in range(4):
        match = _PGM_TOKEN.match(data, pos)
        if not match:
            raise FileFormatException("truncated PGM header", path=path)
        tokens.append(match.group(1))
        pos = match.end()
    if tokens[0] != b"P5":
        raise FileFormatException(f"expected P5 magic, got {tokens[0]!r}", path=path)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FileFormatException("non-numeric PGM header field", path=path)
    if maxval != 255:
        raise FileFormatException(f"expected maxval 255, got {maxval}", path=path)
    if width < 1 or height < 1:
        raise FileFormatException(f"invalid image size {width}x{height}", path=path)
    pixels = data[pos + 1:]  # exactly one whitespace byte after maxval
    if len(pixels) < width * height:
        raise FileFormatException(f"expected {width * height} pixel bytes, found {len(pixels)}", path=path)
    image = np.frombuffer(pixels[: width * height], dtype=np.uint8).reshape(height, width)
    log.debug("read mask", path, f"{width}x{height}")
    return torch.as_tensor(image.astype(np.float64) / 255.0, dtype=DTYPE)


@skelfit_guard(WorkbenchException, context_fn=_path_context)
def write_pgm(path, mask) -> None:
    values = torch.as_tensor(mask, dtype=DTYPE).detach().numpy()
    if values.ndim != 2:
        raise InvalidInputException(f"expected an (H, W) mask, got {values.shape}", field="mask")
    height, width = values.shape
    pixels = np.clip(np.rint(values * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())


# --- Middlebury flow -------------------------------------------------------------------

@skelfit_guard(WorkbenchException, context_fn=_path_context)
def read_flo(path) -> FlowMap:
    data = _read_bytes(path)
    if len(data) < 12:
        raise FileFormatException("truncated flow header", path=path)
    magic = np.frombuffer(data[:4], dtype="<f4")[0]
    if magic != np.float32(FLO_MAGIC):
        raise FileFormatException(f"bad flow magic {float(magic)}, expected {FLO_MAGIC}", path=path)
    width, height = (int(v) for v in np.frombuffer(data[4:12], dtype="<i4"))
    if width < 1 or height < 1:
        raise FileFormatException(f"invalid flow size {width}x{height}", path=path)
    expected = width * height * 2 * 4
    if len(data) - 12 < expected:
        raise FileFormatException(f"expected {expected} payload bytes, found {len(data) - 12}", path=path)
    values = np.frombuffer(data[12:12 + expected], dtype="<f4").reshape(height, width, 2).astype(np.float64)
    valid = (np.abs(values) <= FLO_UNKNOWN_THRESHOLD).all(axis=-1) & np.isfinite(values).all(axis=-1)
    values[~valid] = 0.0
    log.debug("read flow", path, f"{width}x{height}")
    return FlowMap(torch.as_tensor(values, dtype=DTYPE), torch.as_tensor(valid))


@skelfit_guard(WorkbenchException, context_fn=_path_context)
def write_flo(path, flow: FlowMap) -> None:
    values = flow.flow.detach().numpy().astype("<f4")
    values[~flow.valid.numpy()] = FLO_UNKNOWN
    height, width = flow.shape
    with open(path, "wb") as f:
        f.write(np.array([FLO_MAGIC], dtype="<f4").tobytes())
        f.write(np.array([width, height], dtype="<i4").tobytes())
        f.write(values.tobytes())


# --- EMB1 embeddings -------------------------------------------------------------------

@skelfit_guard(WorkbenchException, context_fn=_path_context)
def read_embeddings(path) -> np.ndarray:
    """(V, D) float32 vectors"""
    data = _read_bytes(path)
    if len(data) < 12 or data[:4] != EMBEDDING_MAGIC:
        raise FileFormatException(f"expected {EMBEDDING_MAGIC!r} magic", path=path)
    dimension, count = (int(v) for v in np.frombuffer(data[4:12], dtype="<u4"))
    expected = dimension * count * 4
    if len(data) - 12 != expected:
        raise FileFormatException(
            f"header declares {count}x{dimension} vectors ({expected} bytes), payload is {len(data) - 12}", path=path
        )
    return np.frombuffer(data[12:], dtype="<f4").reshape(count, dimension).astype(np.float32)


@skelfit_guard(WorkbenchException, context_fn=_path_context)
def write_embeddings(path, vectors) -> None:
    array = np.asarray(vectors, dtype="<f4")
    if array.ndim == 1:
        array = array[None, :]
    if array.ndim != 2:
        raise InvalidInputException(f"expected (V, D) vectors, got {array.shape}", field="vectors")
    count, dimension = array.shape
    with open(path, "wb") as f:
        f.write(EMBEDDING_MAGIC)
        f.write(np.array([dimension, count], dtype="<u4").tobytes())
        f.write(array.tobytes())


# --- meshes and point sets -------------------------------------------------------------

@skelfit_guard(WorkbenchException, context_fn=_path_context)
def write_obj(path, vertices, faces) -> None:
    vertices = torch.as_tensor(vertices, dtype=DTYPE).detach().numpy()
    faces = np.asarray(faces, dtype=np.int64)
    lines: List[str] = [f"v {x!r} {y!r} {z!r}" for x, y, z in vertices.tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in faces.tolist()]
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


@skelfit_guard(WorkbenchException, context_fn=_path_context)
def read_points(path) -> torch.Tensor:
    """(M, 3) points from .npy, .obj (vertex lines) or whitespace-separated text"""
    if not os.path.isfile(path):
        raise InvalidInputException(f"file not found: {path}", field="path")
    suffix = os.path.splitext(path)[1].lower()
    if suffix == ".npy":
        points = np.load(path)
    elif suffix == ".obj":
        with open(path) as f:
            points = [[float(v) for v in line.split()[1:4]] for line in f if line.startswith("v ")]
        points = np.asarray(points, dtype=np.float64)
    else:
        points = np.loadtxt(path, dtype=np.float64, ndmin=2)
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3 or points.shape[0] == 0:
        raise FileFormatException(f"expected a nonempty (M, 3) point set, got {points.shape}", path=path)
    return torch.as_tensor(points, dtype=DTYPE)


def frame_paths(directory: str, pattern: str, count: int) -> Sequence[str]:
    return [os.path.join(directory, pattern % t) for t in range(count)]


# --- JSON documents --------------------------------------------------------------------

def _read_json(path):
    if not os.path.isfile(path):
        raise InvalidInputException(f"file not found: {path}", field="path")
    with open(path) as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise SchemaException(f"not valid JSON ({e.msg} at line {e.lineno})", field=os.path.basename(path))


def _number(doc, key: str, field: str, required: bool = True, default=None) -> float:
    if key not in doc:
        if required:
            raise SchemaException("missing field", field=f"{field}.{key}")
        return default
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaException(f"expected a number, got {type(value).__name__}", field=f"{field}.{key}")
    return value


@skelfit_guard(WorkbenchException, context_fn=_path_context)
def read_camera(path) -> Camera:
    """Camera JSON: fx, fy, cx, cy, width, height and optional rotation (xyzw) / translation"""
    doc = _read_json(path)
    if not isinstance(doc, dict):
        raise SchemaException("expected an object", field="camera")
    unknown = sorted(set(doc) - {"fx", "fy", "cx", "cy", "width", "height", "rotation", "translation"})
    if unknown:
        raise SchemaException("unknown field", field=f"camera.{unknown[0]}")
    values = {key: _number(doc, key, "camera") for key in ("fx", "fy", "cx", "cy", "width", "height")}
    for key in ("width", "height"):
        if values[key] != int(values[key]):
            raise SchemaException("expected an integer", field=f"camera.{key}")
    extrinsics = {}
    for key, size in (("rotation", 4), ("translation", 3)):
        if key in doc:
            array = np.asarray(doc[key], dtype=np.float64) if isinstance(doc[key], list) else None
            if array is None or array.shape != (size,):
                raise SchemaException(f"expected {size} numbers", field=f"camera.{key}")
            extrinsics[key] = torch.as_tensor(array, dtype=DTYPE)
    camera = Camera(
        float(values["fx"]), float(values["fy"]), float(values["cx"]), float(values["cy"]),
        int(values["width"]), int(values["height"]), **extrinsics,
    )
    return camera.validate()


@skelfit_guard(WorkbenchException, context_fn=_path_context)
def write_camera(path, camera: Camera) -> None:
    camera = camera.detach()
    doc = {
        "fx": camera.fx, "fy": camera.fy, "cx": camera.cx, "cy": camera.cy,
        "width": int(camera.width), "height": int(camera.height),
        "rotation": camera.rotation.tolist(), "translation": camera.translation.tolist(),
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)


@skelfit_guard(WorkbenchException, context_fn=_path_context)
def read_manifest(path) -> Dict[str, Tuple[str, Optional[str]]]:
    """
    Index manifest: item id → {"embedding": path, "shape": path}. Items may sit at the top
    level or under "items"; relative paths resolve against the manifest's directory.
    """
    doc = _read_json(path)
    items = doc.get("items", doc) if isinstance(doc, dict) else None
    if not isinstance(items, dict):
        raise SchemaException("expected an object mapping item ids", field="manifest")
    base = os.path.dirname(os.path.abspath(path))
    entries: Dict[str, Tuple[str, Optional[str]]] = {}
    for item_id, entry in items.items():
        if not isinstance(entry, dict) or not isinstance(entry.get("embedding"), str):
            raise SchemaException("expected {\"embedding\": path, \"shape\": path}", field=f"manifest.{item_id}")
        shape = entry.get("shape")
        if shape is not None and not isinstance(shape, str):
            raise SchemaException("expected a path", field=f"manifest.{item_id}.shape")
        entries[str(item_id)] = (
            os.path.join(base, entry["embedding"]),
            os.path.join(base, shape) if shape is not None else None,
        )
    return entries
