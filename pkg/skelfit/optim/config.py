# File: skelfit/optim/config.py
from __future__ import annotations

from dataclasses import dataclass, field

from ..energy import EnergyWeights
from ..exception import InvalidInputException

SKINNING_INITS = ("template", "kmeans")


@dataclass(frozen=True)
class CameraSearchConfig:
    radius: float = 5.0
    candidates: int = 256
    top_k: int = 10
    local_radius: float = 0.5      # 0.1 · radius
    max_rounds: int = 2
    threshold: float = 1e-3        # relative mask-loss improvement
    patience: int = 10             # iterations the threshold is measured over
    refine_iterations: int = 200
    refine_rate: float = 1e-2

    def validate(self) -> "CameraSearchConfig":
        if not self.radius > 0:
            raise InvalidInputException("sphere radius must be positive", field="camera_search.radius")
        if self.candidates < 1:
            raise InvalidInputException("need at least one candidate", field="camera_search.candidates")
        if not 1 <= self.top_k <= self.candidates:
            raise InvalidInputException(
                f"top_k must lie in [1, {self.candidates}], got {self.top_k}", field="camera_search.top_k"
            )
        if self.local_radius < 0:
            raise InvalidInputException("local radius must be >= 0", field="camera_search.local_radius")
        if self.max_rounds < 1:
            raise InvalidInputException("need at least one round", field="camera_search.max_rounds")
        if self.patience < 1 or self.refine_iterations < 0 or not self.refine_rate > 0:
            raise InvalidInputException("invalid refinement settings", field="camera_search.refine_iterations")
        return self


@dataclass(frozen=True)
class FitConfig:
    epochs_total: int = 200
    epochs_stage1: int = 60
    stage1_scale: float = 5e-2
    stage2_default: float = 4e-3
    stage2_scale_and_field: float = 1e-3
    weights: EnergyWeights = field(default_factory=EnergyWeights)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    sigma: float = 1e-4
    seed: int = 0
    hidden: int = 64
    log_every: int = 10

    # ablations
    optimize_field: bool = True
    stretch: bool = True
    scale_stage: bool = True
    optimize_skinning: bool = True
    skinning_init: str = "template"

    estimate_camera: bool = False
    camera_search: CameraSearchConfig = field(default_factory=CameraSearchConfig)

    def validate(self) -> "FitConfig":
        if self.epochs_total < 0 or self.epochs_stage1 < 0:
            raise InvalidInputException("epoch counts must be >= 0", field="epochs_total")
        if self.epochs_stage1 > self.epochs_total:
            raise InvalidInputException(
                f"epochs_stage1 ({self.epochs_stage1}) exceeds epochs_total ({self.epochs_total})",
                field="epochs_stage1",
            )
        for name in ("stage1_scale", "stage2_default", "stage2_scale_and_field", "eps", "sigma"):
            if not getattr(self, name) > 0:
                raise InvalidInputException("must be positive", field=name)
        for name in ("beta1", "beta2"):
            if not 0 <= getattr(self, name) < 1:
                raise InvalidInputException("must lie in [0, 1)", field=name)
        if self.hidden < 1:
            raise InvalidInputException("hidden width must be >= 1", field="hidden")
        if self.skinning_init not in SKINNING_INITS:
            raise InvalidInputException(f"expected one of {SKINNING_INITS}", field="skinning_init")
        self.weights.validate()
        self.camera_search.validate()
        return self
