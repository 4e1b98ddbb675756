# File: skelfit/reanimate/retarget.py
"""Inverse-kinematics retargeting: pose a fitted shape so its surface matches a target point set."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import torch

from ..energy import chamfer
from ..log import log
from ..skeleton import FramePose, RigidTransform, ShapeParams, SkeletalShape, deform_prepared, prepare, quaternion
from .._constant import DTYPE
from ..exception import InvalidInputException


@dataclass(frozen=True)
class RetargetConfig:
    max_iterations: int = 500
    rate: float = 1e-2
    threshold: float = 1e-6   # relative Chamfer improvement over ``patience`` iterations
    patience: int = 20
    optimize_root: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def validate(self) -> "RetargetConfig":
        if self.max_iterations < 1:
            raise InvalidInputException("max_iterations must be >= 1", field="retarget.max_iterations")
        if not self.rate > 0:
            raise InvalidInputException("rate must be positive", field="retarget.rate")
        if self.threshold < 0 or self.patience < 1:
            raise InvalidInputException("invalid convergence settings", field="retarget.threshold")
        return self


@dataclass(frozen=True)
class RetargetResult:
    pose: FramePose
    chamfer: float
    initial_chamfer: float
    iterations: int
    diverged: bool = False


def retarget(
    shape: SkeletalShape,
    params: ShapeParams,
    target,
    config: Optional[RetargetConfig] = None,
    initial: Optional[FramePose] = None,
) -> RetargetResult:
    """
    Adam on joint quaternions (and the root when ``optimize_root``) minimizing
    chamfer(deform(shape, params, pose), target). Shape variables stay frozen; the best pose
    seen is returned, so the result never scores worse than ``initial``.
    """
    config = (config or RetargetConfig()).validate()
    target = torch.as_tensor(target, dtype=DTYPE).detach()
    if target.ndim != 2 or target.shape[0] == 0 or target.shape[1] != 3:
        raise InvalidInputException(f"expected a nonempty (M, 3) target, got {tuple(target.shape)}", field="target")
    with torch.no_grad():
        prepared = prepare(shape, params.detach())
    start = initial or FramePose.rest(shape.num_bones)

    joints = start.joints.detach().clone().requires_grad_(True)
    root_rotation = start.root.rotation.detach().clone().requires_grad_(config.optimize_root)
    root_translation = start.root.translation.detach().clone().requires_grad_(config.optimize_root)

    def current() -> FramePose:
        return FramePose(RigidTransform(root_rotation, root_translation), joints)

    def snapshot() -> FramePose:
        return FramePose(
            RigidTransform(quaternion.normalize(root_rotation.detach()).clone(), root_translation.detach().clone()),
            quaternion.normalize(joints.detach()).clone(),
        )

    with torch.no_grad():
        initial_value = float(chamfer(deform_prepared(prepared, current()), target))
    best_value, best_pose = initial_value, snapshot()
    if initial_value == 0.0:
        return RetargetResult(best_pose, 0.0, 0.0, 0)

    variables = [joints] + ([root_rotation, root_translation] if config.optimize_root else [])
    optimizer = torch.optim.Adam(variables, lr=config.rate, betas=(config.beta1, config.beta2), eps=config.eps)
    history = [initial_value]
    diverged = False
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        optimizer.zero_grad()
        loss = chamfer(deform_prepared(prepared, current()), target)
        value = float(loss.detach())
        if not math.isfinite(value):
            log.warning(f"retarget diverged at iteration {iterations}; keeping best pose")
            diverged = True
            break
        if value < best_value:
            best_value, best_pose = value, snapshot()
        history.append(value)
        if len(history) > config.patience:
            before = min(history[: -config.patience])
            if before <= 0 or (before - best_value) <= config.threshold * before:
                break
        loss.backward()
        optimizer.step()
        with torch.no_grad():
            joints.copy_(quaternion.normalize(joints))
            if config.optimize_root:
                root_rotation.copy_(quaternion.normalize(root_rotation))
    else:
        with torch.no_grad():
            value = float(chamfer(deform_prepared(prepared, current()), target))
        if math.isfinite(value) and value < best_value:
            best_value, best_pose = value, snapshot()

    log.info("retarget done", "iterations", iterations, "chamfer", f"{initial_value:.6g} -> {best_value:.6g}")
    return RetargetResult(best_pose, best_value, initial_value, iterations, diverged)
