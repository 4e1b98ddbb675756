# File: skelfit/optim/gradcheck.py
"""
Finite-difference check of every energy term against every variable class.

Each scene is a small random tube rig (at most 4 bones and 50 vertices) seen by a 16×16
camera. Observed masks and flows come from a second, perturbed state so every residual is
nonzero. The flow z-buffer is pinned at the base state so both sides of a central difference
share one visibility assignment.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List

import numpy as np
import torch

from .variables import VARIABLE_CLASSES, FitVariables, energy_and_gradients
from ..energy import TERMS, EnergyWeights, SceneState, flow_visibility, render_scene, total_energy
from ..log import log
from ..render import Camera, rasterize_hard
from ..skeleton import DisplacementField, RigidTransform, ShapeParams, primitives, quaternion
from .._constant import DTYPE

STEP = 1e-4
RELATIVE_TOLERANCE = 1e-3
ABSOLUTE_FLOOR = 1e-6


@dataclass(frozen=True)
class GradcheckCase:
    scene: int
    term: str
    variable: str
    component: str
    analytic: float
    numeric: float

    @property
    def passed(self) -> bool:
        return gradients_agree(self.analytic, self.numeric)

    @property
    def name(self) -> str:
        return f"scene{self.scene}.{self.term}.{self.component}"


@dataclass
class GradcheckReport:
    cases: List[GradcheckCase] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(case.passed for case in self.cases)

    @property
    def failures(self) -> List[GradcheckCase]:
        return [case for case in self.cases if not case.passed]


def gradients_agree(analytic: float, numeric: float) -> bool:
    """Relative agreement, compared absolutely when the analytic value is tiny"""
    if not (np.isfinite(analytic) and np.isfinite(numeric)):
        return False
    if abs(analytic) < ABSOLUTE_FLOOR:
        return abs(analytic - numeric) <= ABSOLUTE_FLOOR
    return abs(analytic - numeric) <= RELATIVE_TOLERANCE * max(abs(analytic), abs(numeric))


def make_scene(seed: int, size: int = 16):
    """Random small scene: (state, observations) with nonzero residuals in every term"""
    from ..workbench.observations import ObservationSequence

    rng = np.random.default_rng(seed)
    num_bones = int(rng.integers(2, 5))
    shape = primitives.tube_shape(
        num_bones=num_bones, bone_length=1.0 / num_bones, radius=0.2, rings_per_bone=1, segments=6, blend=0.5
    )
    camera = Camera(fx=float(size), fy=float(size), cx=size / 2.0, cy=size / 2.0, width=size, height=size)
    # tube axis along −y in camera space, centered on the optical axis
    root = RigidTransform(
        quaternion.from_axis_angle([1.0, 0.0, 0.0], np.pi / 2),
        torch.tensor([0.0, 0.5, 2.5], dtype=DTYPE),
    )

    def random_state(spread: float) -> SceneState:
        field_ = DisplacementField.initialize(hidden=8, seed=int(rng.integers(1 << 30)))
        last = len(field_.weights) - 1
        weights = list(field_.weights)
        weights[last] = torch.as_tensor(rng.normal(scale=0.05, size=tuple(weights[last].shape)), dtype=DTYPE)
        field_ = DisplacementField(tuple(weights), field_.biases)
        params = ShapeParams(
            scale=torch.tensor(rng.uniform(0.9, 1.1), dtype=DTYPE),
            bone_scales=torch.as_tensor(rng.uniform(0.85, 1.15, size=num_bones), dtype=DTYPE),
            displacement=field_,
            skin_logits=torch.as_tensor(rng.normal(size=(shape.mesh.num_vertices, num_bones)), dtype=DTYPE),
        )
        poses = primitives.perturbed_poses(rng, num_bones, 2, spread, root)
        poses = replace(poses, root_translations=poses.root_translations + torch.as_tensor(
            rng.normal(scale=0.02, size=(2, 3)), dtype=DTYPE))
        return SceneState(shape, params, poses, camera, sigma=1e-2)

    state = random_state(0.3)
    target = random_state(0.3)
    with torch.no_grad():
        rendered = render_scene(target)
        masks = torch.stack([rasterize_hard(v, shape.mesh.faces, camera) for v in rendered.vertices])
    observations = ObservationSequence.build(masks, [f.detach() for f in rendered.flows], camera)
    return state, observations


def _components(rng: np.random.Generator, variables: FitVariables, variable: str, samples: int):
    """(leaf name, flat index) pairs sampled from one variable class"""
    pool = [(name, i) for name in variables.names([variable]) for i in range(variables.leaves[name].numel())]
    picks = rng.choice(len(pool), size=min(samples, len(pool)), replace=False)
    return [pool[i] for i in sorted(picks)]


def _numeric(state: SceneState, observations, weights, visibility, name: str, index: int) -> float:
    variables = FitVariables(state.params, state.poses)
    leaf = variables.leaves[name]
    values = []
    with torch.no_grad():
        for sign in (1.0, -1.0):
            leaf.view(-1)[index] += sign * STEP
            values.append(float(total_energy(variables.state(state), observations, weights, visibility).total))
            leaf.view(-1)[index] -= sign * STEP
    return (values[0] - values[1]) / (2.0 * STEP)


def check_scene(scene: int, state: SceneState, observations, samples: int = 3) -> List[GradcheckCase]:
    rng = np.random.default_rng(scene)
    visibility = flow_visibility(state)
    variables = FitVariables(state.params, state.poses)
    cases = []
    for term in TERMS:
        weights = EnergyWeights(**{f"w_{t}": (1.0 if t == term else 0.0) for t in TERMS})
        _, grads = energy_and_gradients(state, observations, weights, visibility)
        for variable in VARIABLE_CLASSES:
            for name, index in _components(rng, variables, variable, samples):
                analytic = float(grads[name].reshape(-1)[index])
                numeric = _numeric(state, observations, weights, visibility, name, index)
                cases.append(GradcheckCase(scene, term, variable, f"{name}[{index}]", analytic, numeric))
    return cases


def run_gradcheck(seed: int = 0, scenes: int = 10, samples: int = 3) -> GradcheckReport:
    report = GradcheckReport()
    for offset in range(scenes):
        scene = seed + offset
        state, observations = make_scene(scene)
        cases = check_scene(scene, state, observations, samples)
        report.cases.extend(cases)
        failed = [c for c in cases if not c.passed]
        log.info("gradcheck scene", scene, "cases", len(cases), "failed", len(failed))
        for case in failed:
            log.error(f"{case.name}: analytic {case.analytic:.9g} vs numeric {case.numeric:.9g}")
    return report
