# File: skelfit/optim/adam.py
"""Functional single step over ``torch.optim.Adam`` for callers that keep their own moments."""

from __future__ import annotations

from typing import Dict, Iterable, NamedTuple, Optional, Tuple

import torch

from ..skeleton import quaternion
from ..exception import DivergenceException, InvalidInputException


class AdamMoments(NamedTuple):
    exp_avg: torch.Tensor
    exp_avg_sq: torch.Tensor

    @classmethod
    def zeros_like(cls, variable: torch.Tensor) -> "AdamMoments":
        return cls(torch.zeros_like(variable), torch.zeros_like(variable))


def adam_step(
    variables: Dict[str, torch.Tensor],
    gradients: Dict[str, torch.Tensor],
    moments: Optional[Dict[str, AdamMoments]],
    rate: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    step_index: int = 1,
    unit_norm: Iterable[str] = (),
) -> Tuple[Dict[str, torch.Tensor], Dict[str, AdamMoments]]:
    """
    One bias-corrected Adam update. ``step_index`` counts from 1. Variables named in
    ``unit_norm`` are quaternion blocks and get renormalized afterwards. Inputs are not mutated.
    """
    if step_index < 1:
        raise InvalidInputException(f"step index must be >= 1, got {step_index}", field="step_index")
    for name, grad in gradients.items():
        if not torch.isfinite(grad).all():
            raise DivergenceException(f"gradient of '{name}' is not finite", term=name)
    moments = moments or {}

    params = {}
    for name, value in variables.items():
        p = value.detach().clone()
        grad = gradients.get(name)
        p.grad = torch.zeros_like(p) if grad is None else grad.detach().clone().to(p.dtype)
        params[name] = p
    optimizer = torch.optim.Adam(list(params.values()), lr=rate, betas=(beta1, beta2), eps=eps, foreach=False)
    for name, p in params.items():
        m = moments.get(name) or AdamMoments.zeros_like(p)
        optimizer.state[p] = {
            "step": torch.tensor(float(step_index - 1)),
            "exp_avg": m.exp_avg.detach().clone(),
            "exp_avg_sq": m.exp_avg_sq.detach().clone(),
        }
    optimizer.step()

    unit = set(unit_norm)
    updated, new_moments = {}, {}
    for name, p in params.items():
        value = p.detach()
        if name in unit:
            value = quaternion.normalize(value)
        updated[name] = value
        state = optimizer.state[p]
        new_moments[name] = AdamMoments(state["exp_avg"].clone(), state["exp_avg_sq"].clone())
    return updated, new_moments
