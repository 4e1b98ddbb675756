# File: skelfit/optim/fit.py
"""
Two-stage fitting of a skeletal template to an observation sequence.

Stage 1 updates only the global scale against the mask term. Stage 2 updates every enabled
variable against the full energy, scale and displacement field at their own rate. One epoch
is one gradient step over all frames. The returned state is the lowest-energy state seen.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import torch

from .adam import AdamMoments
from .camera_search import CameraEstimate, estimate_camera
from .config import FitConfig
from .initialization import init_scale, kmeans_skinning, mask_bbox
from .variables import FitVariables
from ..energy import EnergyBreakdown, SceneState, TERMS, total_energy
from ..log import log
from ..render import Camera, rasterize_soft
from ..skeleton import (
    PoseSequence,
    ShapeParams,
    SkeletalShape,
    deform,
    logits_from_weights,
)
from ..exception import DivergenceException


@dataclass
class FitState:
    params: ShapeParams
    poses: PoseSequence
    moments: Dict[str, AdamMoments] = field(default_factory=dict)
    epoch: int = 0
    history: List[EnergyBreakdown] = field(default_factory=list)


@dataclass(frozen=True)
class FitResult:
    params: ShapeParams
    poses: PoseSequence
    history: List[EnergyBreakdown]
    final: EnergyBreakdown
    camera: Camera
    best_epoch: int
    diverged: bool = False
    camera_estimate: Optional[CameraEstimate] = None
    state: Optional[FitState] = None

    def __iter__(self):
        return iter((self.params, self.poses, self.history))

    def history_rows(self) -> List[List[float]]:
        return [b.row(epoch) for epoch, b in enumerate(self.history)]


def initial_params(shape: SkeletalShape, config: FitConfig) -> ShapeParams:
    params = ShapeParams.initial(shape, seed=config.seed, hidden=config.hidden)
    if config.skinning_init == "kmeans":
        params = replace(params, skin_logits=logits_from_weights(kmeans_skinning(shape)))
    return params


def initial_poses(num_frames: int, num_bones: int, roots: Optional[PoseSequence] = None) -> PoseSequence:
    """Identity joints; roots copied from ``roots`` when given"""
    poses = PoseSequence.rest(num_frames, num_bones)
    if roots is None:
        return poses
    return PoseSequence(roots.root_rotations.detach().clone(), roots.root_translations.detach().clone(), poses.joints)


def _moments(optimizer: torch.optim.Optimizer, variables: FitVariables) -> Dict[str, AdamMoments]:
    moments = {}
    for name, leaf in variables.leaves.items():
        state = optimizer.state.get(leaf)
        if state and "exp_avg" in state:
            moments[name] = AdamMoments(state["exp_avg"].clone(), state["exp_avg_sq"].clone())
    return moments


class _Session:
    """Mutable bookkeeping for one fit call: current variables, history and the best state"""

    def __init__(self, base: SceneState, observations, config: FitConfig):
        self.base = base
        self.observations = observations
        self.config = config
        self.variables = FitVariables(base.params, base.poses)
        self.state = FitState(base.params, base.poses)
        self.best: Optional[tuple] = None
        self.diverged = False

    def energy(self) -> EnergyBreakdown:
        return total_energy(self.variables.state(self.base), self.observations, self.config.weights)

    def consider(self, breakdown: EnergyBreakdown, epoch: int) -> None:
        total = float(breakdown.total.detach())
        if self.best is None or total < self.best[0]:
            params, poses = self.variables.snapshot()
            self.best = (total, epoch, params, poses, _detached(breakdown))

    def record(self, breakdown: EnergyBreakdown, epoch: int) -> None:
        self.state.history.append(_detached(breakdown))
        self.state.epoch = epoch + 1
        if self.config.log_every and epoch % self.config.log_every == 0:
            values = breakdown.as_dict()
            log.metric("epoch", epoch, *(f"{name}={values[name]:.6g}" for name in ("total",) + TERMS))

    def run_stage(self, name: str, optimizer: torch.optim.Optimizer, epochs: int, start: int, objective) -> int:
        log.info(f"{name}: {epochs} epochs")
        epoch = start
        for epoch in range(start, start + epochs):
            for leaf in self.variables.leaves.values():
                leaf.grad = None
            breakdown = self.energy()
            term = breakdown.first_non_finite()
            if term is not None:
                log.warning(f"energy term '{term}' diverged at epoch {epoch}; returning last finite best")
                self.diverged = True
                return epoch
            self.record(breakdown, epoch)
            self.consider(breakdown, epoch)
            loss = objective(breakdown)
            if not loss.requires_grad:
                continue
            loss.backward()
            for leaf_name, leaf in self.variables.leaves.items():
                if leaf.grad is not None and not torch.isfinite(leaf.grad).all():
                    log.warning(f"gradient of '{leaf_name}' diverged at epoch {epoch}; returning last finite best")
                    self.diverged = True
                    return epoch
            optimizer.step()
            self.variables.project_constraints()
        return start + epochs


def _detached(breakdown: EnergyBreakdown) -> EnergyBreakdown:
    return EnergyBreakdown(*(getattr(breakdown, name).detach().clone() for name in ("total",) + TERMS))


def _prefit_scale(shape: SkeletalShape, params: ShapeParams, poses: PoseSequence, camera: Camera, observations, sigma: float) -> float:
    with torch.no_grad():
        vertices = deform(shape, params, poses.frame(0))
        rendered = rasterize_soft(vertices, shape.mesh.faces, camera, sigma)
    ratio = init_scale(
        mask_bbox(rendered, field="rendered_masks[0]"),
        mask_bbox(observations.masks[0], field="masks[0]"),
    )
    return float(params.scale) * ratio


def fit(
    shape: SkeletalShape,
    observations,
    config: Optional[FitConfig] = None,
    roots: Optional[PoseSequence] = None,
) -> FitResult:
    """
    Fit shape variables and per-frame poses to ``observations``. ``roots`` optionally supplies
    per-frame root transforms; joints always start at identity. With ``estimate_camera`` the
    camera comes from the sphere search and roots stay fixed at identity.

    The energy renders soft silhouettes. Observations written by ``synth`` carry hard masks,
    so even the generating state keeps a small mask residual there (below 1e-2 at
    sigma 1e-6 on the synth fixtures); only observations rendered by the soft renderer itself
    make the starting state an exact zero of the energy.
    """
    config = (config or FitConfig()).validate()
    shape.validate()
    observations.validate()
    num_frames, num_bones = observations.num_frames, shape.num_bones

    params = initial_params(shape, config)
    camera = observations.camera
    estimate = None
    if config.estimate_camera:
        with torch.no_grad():
            canonical = deform(shape, params, PoseSequence.rest(1, num_bones).frame(0))
        estimate = estimate_camera(
            canonical, shape.mesh.faces, observations.masks, config.camera_search, camera,
            sigma=config.sigma, seed=config.seed,
        )
        camera = estimate.camera
        roots = None
    poses = initial_poses(num_frames, num_bones, roots).validate(num_bones)

    params = params.with_scale(_prefit_scale(shape, params, poses, camera, observations, config.sigma))
    log.info("initial scale", f"{float(params.scale):.6g}")

    base = SceneState(shape, params, poses, camera, config.sigma)
    session = _Session(base, observations, config)
    variables = session.variables
    betas = (config.beta1, config.beta2)

    epoch = 0
    stage2_epochs = config.epochs_total - config.epochs_stage1
    if config.scale_stage and config.epochs_stage1 > 0:
        stage1 = torch.optim.Adam(variables.tensors(["scale"]), lr=config.stage1_scale, betas=betas, eps=config.eps)
        w_mask = config.weights.w_mask
        epoch = session.run_stage("stage 1 (scale)", stage1, config.epochs_stage1, 0, lambda b: w_mask * b.mask)

    if not session.diverged and stage2_epochs > 0:
        slow = ["scale"] + (["field"] if config.optimize_field else [])
        fast = ["joints"]
        if not config.estimate_camera:
            fast.append("root")
        if config.stretch:
            fast.append("bone_scales")
        if config.optimize_skinning:
            fast.append("skin_logits")
        stage2 = torch.optim.Adam(
            [
                {"params": variables.tensors(slow), "lr": config.stage2_scale_and_field},
                {"params": variables.tensors(fast), "lr": config.stage2_default},
            ],
            betas=betas,
            eps=config.eps,
        )
        epoch = session.run_stage("stage 2 (joint)", stage2, stage2_epochs, epoch, lambda b: b.total)
        session.state.moments = _moments(stage2, variables)

    if not session.diverged:
        with torch.no_grad():
            breakdown = session.energy()
        if breakdown.is_finite():
            session.consider(breakdown, epoch)
        else:
            session.diverged = True

    if session.best is None:
        raise DivergenceException("energy was not finite at initialization", term=_non_finite_term(session))
    total, best_epoch, best_params, best_poses, best_breakdown = session.best
    log.info("fit done", "best epoch", best_epoch, "energy", f"{total:.6g}", "diverged", session.diverged)
    session.state.params, session.state.poses = best_params, best_poses
    return FitResult(
        params=best_params,
        poses=best_poses,
        history=session.state.history,
        final=best_breakdown,
        camera=camera,
        best_epoch=best_epoch,
        diverged=session.diverged,
        camera_estimate=estimate,
        state=session.state,
    )


def _non_finite_term(session: _Session) -> Optional[str]:
    with torch.no_grad():
        return session.energy().first_non_finite()
