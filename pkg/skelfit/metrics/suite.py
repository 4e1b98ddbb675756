# File: skelfit/metrics/suite.py
from __future__ import annotations

from dataclasses import astuple, dataclass, fields
from typing import List, NamedTuple, Tuple

import numpy as np
import torch
from scipy.optimize import linear_sum_assignment

from ..energy import chamfer
from .._constant import DTYPE, METRIC_HEADER
from ..exception import InvalidInputException, MetricException


def _points(values, field: str) -> np.ndarray:
    points = np.asarray(torch.as_tensor(values, dtype=DTYPE).detach().numpy(), dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise InvalidInputException(f"expected a nonempty (M, 3) point set, got {points.shape}", field=field)
    return points


def mean_chamfer(pred_vertices, ref_vertices) -> float:
    """Shares its definition with the fitting energy: squared distances, both directional means"""
    return float(chamfer(_points(pred_vertices, "pred_vertices"), _points(ref_vertices, "ref_vertices")))


def joint_cd(pred_joints, ref_joints) -> float:
    """Symmetric mean nearest-joint Euclidean distance"""
    a = _points(pred_joints, "pred_joints")
    b = _points(ref_joints, "ref_joints")
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
    return float(d.min(axis=1).mean() + d.min(axis=0).mean())


class Assignment(NamedTuple):
    pairs: List[Tuple[int, int]]
    cost: float


def lap_solve(cost) -> Assignment:
    """Minimum-cost matching of size min(R, C)"""
    matrix = np.asarray(cost, dtype=np.float64)
    if matrix.ndim != 2:
        raise InvalidInputException(f"expected an R×C matrix, got shape {matrix.shape}", field="cost")
    if not np.isfinite(matrix).all():
        raise InvalidInputException("cost matrix has non-finite entries", field="cost")
    if matrix.size == 0:
        return Assignment([], 0.0)
    rows, cols = linear_sum_assignment(matrix)
    return Assignment([(int(r), int(c)) for r, c in zip(rows, cols)], float(matrix[rows, cols].sum()))


def bone_vertex_sets(vertices, weights) -> List[np.ndarray]:
    """Vertices grouped by argmax-weight bone; bones with no vertex are dropped"""
    points = _points(vertices, "vertices")
    w = np.asarray(torch.as_tensor(weights, dtype=DTYPE).detach().numpy())
    if w.ndim != 2 or w.shape[0] != points.shape[0]:
        raise InvalidInputException(f"expected ({points.shape[0]}, K) weights, got {w.shape}", field="weights")
    owner = np.argmax(w, axis=1)
    return [points[owner == k] for k in range(w.shape[1]) if (owner == k).any()]


def skinning_distance(pred_vertices, pred_weights, ref_vertices, ref_weights) -> float:
    """Optimal bone matching by per-bone vertex-set Chamfer, averaged over the matching"""
    pred_sets = bone_vertex_sets(pred_vertices, pred_weights)
    ref_sets = bone_vertex_sets(ref_vertices, ref_weights)
    if not pred_sets or not ref_sets:
        raise InvalidInputException("no bone has an associated vertex", field="weights")
    cost = np.array([[float(chamfer(p, r)) for r in ref_sets] for p in pred_sets])
    assignment = lap_solve(cost)
    return assignment.cost / len(assignment.pairs)


@dataclass(frozen=True)
class MetricReport:
    miou: float
    mcham: float
    joint_cd: float
    skinning_dist: float
    reanimation_err: float

    def validate(self) -> "MetricReport":
        """A NaN or out-of-range value means the computation itself went wrong"""
        if not 0.0 <= self.miou <= 1.0:
            raise MetricException(f"miou {self.miou} outside [0, 1]")
        for f in fields(self)[1:]:
            value = getattr(self, f.name)
            if not value >= 0:
                raise MetricException(f"{f.name} must be >= 0, got {value}")
        return self

    @staticmethod
    def header() -> str:
        return METRIC_HEADER

    def row(self) -> str:
        return ",".join(f"{value:.9g}" for value in astuple(self))

    def as_dict(self) -> dict:
        return dict(zip(METRIC_HEADER.split(","), astuple(self)))
