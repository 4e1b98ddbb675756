# File: skelfit/skeleton/displacement.py
"""
Coordinate-based displacement field R³ → R³ used to reparameterize canonical vertices.

Four linear layers, hidden width 64 by default, ReLU between layers, no positional
encoding. The last layer starts at zero so the initial shape is exactly the template.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Tuple

import torch
import torch.nn.functional as F

from .._constant import DTYPE
from ..exception import InvalidInputException

NUM_LAYERS = 4


@dataclass(frozen=True)
class DisplacementField:
    weights: Tuple[torch.Tensor, ...]  # (out, in) per layer
    biases: Tuple[torch.Tensor, ...]   # (out,) per layer

    @classmethod
    def initialize(cls, hidden: int = 64, seed: int = 0, num_layers: int = NUM_LAYERS) -> "DisplacementField":
        generator = torch.Generator().manual_seed(int(seed))
        sizes = [3] + [hidden] * (num_layers - 1) + [3]
        weights, biases = [], []
        for layer, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            if layer == num_layers - 1:
                weights.append(torch.zeros(fan_out, fan_in, dtype=DTYPE))
                biases.append(torch.zeros(fan_out, dtype=DTYPE))
                continue
            bound = 1.0 / math.sqrt(fan_in)
            w = torch.rand(fan_out, fan_in, generator=generator, dtype=DTYPE) * 2 * bound - bound
            b = torch.rand(fan_out, generator=generator, dtype=DTYPE) * 2 * bound - bound
            weights.append(w)
            biases.append(b)
        return cls(tuple(weights), tuple(biases))

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def hidden(self) -> int:
        return self.weights[0].shape[0]

    def parameters(self) -> List[torch.Tensor]:
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params

    @classmethod
    def from_parameters(cls, params: List[torch.Tensor]) -> "DisplacementField":
        return cls(tuple(params[0::2]), tuple(params[1::2]))

    def detach(self) -> "DisplacementField":
        return DisplacementField.from_parameters([p.detach().clone() for p in self.parameters()])

    def __call__(self, points: torch.Tensor) -> torch.Tensor:
        x = points
        last = self.num_layers - 1
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = F.linear(x, w, b)
            if layer < last:
                x = F.relu(x)
        return x

    def validate(self) -> "DisplacementField":
        if len(self.weights) != len(self.biases) or not self.weights:
            raise InvalidInputException("layer weight/bias count mismatch", field="params.displacement")
        fan_in = 3
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or w.shape[1] != fan_in or tuple(b.shape) != (w.shape[0],):
                raise InvalidInputException(
                    f"layer {layer} has inconsistent shapes {tuple(w.shape)}/{tuple(b.shape)}",
                    field=f"params.displacement.layers[{layer}]",
                )
            if not (torch.isfinite(w).all() and torch.isfinite(b).all()):
                raise InvalidInputException("non-finite parameter", field=f"params.displacement.layers[{layer}]")
            fan_in = w.shape[0]
        if fan_in != 3:
            raise InvalidInputException("final layer must output 3 values", field="params.displacement")
        return self


def apply_displacement(vertices: torch.Tensor, field: DisplacementField, scale) -> torch.Tensor:
    """v' = u·v + V(u·v)"""
    scaled = vertices * scale
    return scaled + field(scaled)
