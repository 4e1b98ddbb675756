# File: skelfit/energy/objective.py
from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Tuple

import torch

from .terms import e_cue, e_smooth, e_symm
from ..render import Camera, FlowMap, PixelPairs, rasterize_soft, render_flow, visible_faces
from ..skeleton import PoseSequence, ShapeParams, SkeletalShape, deform_prepared, prepare
from .._constant import DTYPE, UNIT_TOLERANCE
from ..exception import DivergenceException, InvalidInputException

if TYPE_CHECKING:
    from ..workbench.observations import ObservationSequence

TERMS = ("mask", "flow", "smooth", "symm")


@dataclass(frozen=True)
class EnergyWeights:
    """Weights of the four energy terms and the canonical-frame symmetry plane normal"""

    w_mask: float = 1e4
    w_flow: float = 1e6
    w_smooth: float = 1e6
    w_symm: float = 1e4
    symmetry_normal: Tuple[float, float, float] = (1.0, 0.0, 0.0)

    def weight(self, term: str) -> float:
        return getattr(self, f"w_{term}")

    def only(self, *terms: str) -> "EnergyWeights":
        """Copy keeping the listed terms and zeroing the rest"""
        values = {f"w_{t}": (self.weight(t) if t in terms else 0.0) for t in TERMS}
        return EnergyWeights(**values, symmetry_normal=self.symmetry_normal)

    def validate(self) -> "EnergyWeights":
        for term in TERMS:
            value = self.weight(term)
            if not value >= 0:
                raise InvalidInputException(f"weight must be >= 0, got {value}", field=f"weights.w_{term}")
        n = torch.as_tensor(self.symmetry_normal, dtype=DTYPE)
        if tuple(n.shape) != (3,) or abs(torch.linalg.vector_norm(n).item() - 1.0) > UNIT_TOLERANCE:
            raise InvalidInputException("symmetry normal must be a unit 3-vector", field="weights.symmetry_normal")
        return self


@dataclass(frozen=True)
class EnergyBreakdown:
    total: torch.Tensor
    mask: torch.Tensor
    flow: torch.Tensor
    smooth: torch.Tensor
    symm: torch.Tensor

    def as_dict(self) -> Dict[str, float]:
        return {f.name: float(getattr(self, f.name).detach()) for f in fields(self)}

    def row(self, epoch: int) -> List[float]:
        values = self.as_dict()
        return [epoch] + [values[name] for name in ("total",) + TERMS]

    def is_finite(self) -> bool:
        return all(torch.isfinite(getattr(self, f.name)).all() for f in fields(self))

    def first_non_finite(self) -> Optional[str]:
        for name in TERMS + ("total",):
            if not torch.isfinite(getattr(self, name)).all():
                return name
        return None


@dataclass(frozen=True)
class SceneState:
    """Everything the energy is evaluated at: template, shape variables, poses and camera"""

    shape: SkeletalShape
    params: ShapeParams
    poses: PoseSequence
    camera: Camera
    sigma: float = 1e-4


@dataclass
class RenderedScene:
    vertices: List[torch.Tensor]
    canonical: torch.Tensor
    masks: Optional[torch.Tensor] = None
    flows: List[FlowMap] = field(default_factory=list)


def flow_visibility(state: SceneState) -> List[PixelPairs]:
    """Front-most triangle per pixel for every frame that has a successor"""
    with torch.no_grad():
        prepared = prepare(state.shape, state.params)
        faces = state.shape.mesh.faces
        return [
            visible_faces(deform_prepared(prepared, frame), faces, state.camera)
            for frame in state.poses.frames[:-1]
        ]


def render_scene(
    state: SceneState,
    masks: bool = True,
    flows: bool = True,
    visibility: Optional[Sequence[PixelPairs]] = None,
) -> RenderedScene:
    prepared = prepare(state.shape, state.params)
    faces = state.shape.mesh.faces
    vertices = [deform_prepared(prepared, frame) for frame in state.poses.frames]
    scene = RenderedScene(vertices=vertices, canonical=prepared.vertices)
    if masks:
        scene.masks = torch.stack([rasterize_soft(v, faces, state.camera, state.sigma) for v in vertices])
    if flows:
        scene.flows = [
            render_flow(
                vertices[t], vertices[t + 1], faces, state.camera,
                visibility=None if visibility is None else visibility[t],
            )
            for t in range(len(vertices) - 1)
        ]
    return scene


def total_energy(
    state: SceneState,
    observations: "ObservationSequence",
    weights: EnergyWeights,
    visibility: Optional[Sequence[PixelPairs]] = None,
) -> EnergyBreakdown:
    """
    Weighted sum w_mask·mask + w_flow·flow + w_smooth·smooth + w_symm·symm.

    Terms whose weight is zero are not evaluated and report 0. ``visibility`` pins the flow
    z-buffer (see ``flow_visibility``) so repeated evaluations share one assignment.
    """
    if observations.num_frames != state.poses.num_frames:
        raise InvalidInputException(
            f"{observations.num_frames} observed frames for {state.poses.num_frames} poses", field="poses"
        )
    if (observations.height, observations.width) != (int(state.camera.height), int(state.camera.width)):
        raise InvalidInputException("camera image size differs from the observations", field="camera")

    need_mask = weights.w_mask > 0
    need_flow = weights.w_flow > 0 and observations.num_frames > 1
    zero = torch.zeros((), dtype=DTYPE)
    scene = render_scene(state, masks=need_mask, flows=need_flow, visibility=visibility)

    mask_term = flow_term = zero
    if need_mask or need_flow:
        mask_term, flow_term = e_cue(
            scene.masks if need_mask else observations.masks.to(DTYPE),
            observations.masks,
            scene.flows if need_flow else [],
            observations.flows if need_flow else [],
        )
    smooth_term = e_smooth(state.poses.normalized()) if weights.w_smooth > 0 else zero
    symm_term = e_symm(scene.canonical, weights.symmetry_normal) if weights.w_symm > 0 else zero

    total = (
        weights.w_mask * mask_term
        + weights.w_flow * flow_term
        + weights.w_smooth * smooth_term
        + weights.w_symm * symm_term
    )
    return EnergyBreakdown(total, mask_term, flow_term, smooth_term, symm_term)


def check_finite(breakdown: EnergyBreakdown) -> EnergyBreakdown:
    term = breakdown.first_non_finite()
    if term is not None:
        raise DivergenceException(f"energy term '{term}' is not finite", term=term)
    return breakdown
