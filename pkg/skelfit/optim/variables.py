# File: skelfit/optim/variables.py
"""
Optimization variables as named autograd leaves, and exact energy gradients.

Variable classes: ``joints``, ``root`` (rotations and translations), ``scale``,
``bone_scales``, ``field`` (displacement-field layers) and ``skin_logits``.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple

import torch

from ..energy import EnergyBreakdown, EnergyWeights, SceneState, check_finite, total_energy
from ..render import PixelPairs
from ..skeleton import DisplacementField, PoseSequence, ShapeParams, quaternion
from .._constant import MIN_POSITIVE

VARIABLE_CLASSES = ("joints", "root", "scale", "bone_scales", "field", "skin_logits")
QUATERNION_VARIABLES = ("joints", "root_rotations")
POSITIVE_VARIABLES = ("scale", "bone_scales")


def variable_class(name: str) -> str:
    if name.startswith("field."):
        return "field"
    if name.startswith("root_"):
        return "root"
    return name


class FitVariables:
    """Leaf tensors for every optimization variable, rebuilt into domain values on demand"""

    def __init__(self, params: ShapeParams, poses: PoseSequence):
        self.num_layers = params.displacement.num_layers
        leaves = OrderedDict()
        leaves["scale"] = params.scale
        leaves["bone_scales"] = params.bone_scales
        for i, tensor in enumerate(params.displacement.parameters()):
            leaves[f"field.{i}"] = tensor
        leaves["skin_logits"] = params.skin_logits
        leaves["root_rotations"] = poses.root_rotations
        leaves["root_translations"] = poses.root_translations
        leaves["joints"] = poses.joints
        self.leaves: Dict[str, torch.Tensor] = OrderedDict(
            (name, value.detach().clone().requires_grad_(True)) for name, value in leaves.items()
        )

    def names(self, classes: Optional[Sequence[str]] = None) -> List[str]:
        if classes is None:
            return list(self.leaves)
        return [name for name in self.leaves if variable_class(name) in classes]

    def tensors(self, classes: Optional[Sequence[str]] = None) -> List[torch.Tensor]:
        return [self.leaves[name] for name in self.names(classes)]

    def params(self) -> ShapeParams:
        field = DisplacementField.from_parameters([self.leaves[f"field.{i}"] for i in range(2 * self.num_layers)])
        return ShapeParams(self.leaves["scale"], self.leaves["bone_scales"], field, self.leaves["skin_logits"])

    def poses(self) -> PoseSequence:
        return PoseSequence(self.leaves["root_rotations"], self.leaves["root_translations"], self.leaves["joints"])

    def state(self, base: SceneState) -> SceneState:
        return replace(base, params=self.params(), poses=self.poses())

    def snapshot(self) -> Tuple[ShapeParams, PoseSequence]:
        return self.params().detach(), self.poses().normalized().detach()

    @torch.no_grad()
    def project_constraints(self) -> None:
        """Unit quaternions, positive scales"""
        for name in QUATERNION_VARIABLES:
            self.leaves[name].copy_(quaternion.normalize(self.leaves[name]))
        for name in POSITIVE_VARIABLES:
            self.leaves[name].clamp_(min=MIN_POSITIVE)


def energy_and_gradients(
    state: SceneState,
    observations,
    weights: EnergyWeights,
    visibility: Optional[Sequence[PixelPairs]] = None,
) -> Tuple[EnergyBreakdown, Dict[str, torch.Tensor]]:
    variables = FitVariables(state.params, state.poses)
    breakdown = check_finite(total_energy(variables.state(state), observations, weights, visibility=visibility))
    names = variables.names()
    if not breakdown.total.requires_grad:
        return breakdown, OrderedDict((name, torch.zeros_like(variables.leaves[name])) for name in names)
    grads = torch.autograd.grad(breakdown.total, variables.tensors(), allow_unused=True)
    result = OrderedDict()
    for name, grad in zip(names, grads):
        result[name] = torch.zeros_like(variables.leaves[name]) if grad is None else grad
    return breakdown, result


def gradients(
    state: SceneState,
    observations,
    weights: EnergyWeights,
    visibility: Optional[Sequence[PixelPairs]] = None,
) -> Dict[str, torch.Tensor]:
    """d total_energy / d variable for every optimization variable, by reverse-mode autograd"""
    return energy_and_gradients(state, observations, weights, visibility)[1]
