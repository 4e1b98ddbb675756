# File: skelfit/skeleton/quaternion.py
"""
Unit quaternion helpers on torch tensors, xyzw layout (scalar last).
All functions broadcast over leading dimensions.
"""

import math

import torch

from .._constant import DTYPE, UNIT_TOLERANCE
from ..exception import InvalidInputException


def identity(*shape) -> torch.Tensor:
    q = torch.zeros(*shape, 4, dtype=DTYPE)
    q[..., 3] = 1.0
    return q


def normalize(q: torch.Tensor) -> torch.Tensor:
    return q / torch.linalg.vector_norm(q, dim=-1, keepdim=True)


def conjugate(q: torch.Tensor) -> torch.Tensor:
    return torch.cat([-q[..., :3], q[..., 3:]], dim=-1)


def multiply(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Hamilton product a ∘ b"""
    x1, y1, z1, w1 = a.unbind(-1)
    x2, y2, z2, w2 = b.unbind(-1)
    return torch.stack([
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
    ], dim=-1)


def canonicalize(q: torch.Tensor) -> torch.Tensor:
    """Flip sign so the scalar part is nonnegative"""
    return torch.where(q[..., 3:] < 0, -q, q)


def to_matrix(q: torch.Tensor) -> torch.Tensor:
    x, y, z, w = q.unbind(-1)
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    xw, yw, zw = x * w, y * w, z * w
    rows = [
        torch.stack([1 - 2 * (yy + zz), 2 * (xy - zw), 2 * (xz + yw)], dim=-1),
        torch.stack([2 * (xy + zw), 1 - 2 * (xx + zz), 2 * (yz - xw)], dim=-1),
        torch.stack([2 * (xz - yw), 2 * (yz + xw), 1 - 2 * (xx + yy)], dim=-1),
    ]
    return torch.stack(rows, dim=-2)


def rotate(q: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    return torch.einsum("...ab,...b->...a", to_matrix(q), v)


def from_axis_angle(axis, angle: float) -> torch.Tensor:
    axis = torch.as_tensor(axis, dtype=DTYPE)
    axis = axis / torch.linalg.vector_norm(axis)
    half = 0.5 * angle
    return torch.cat([axis * math.sin(half), torch.tensor([math.cos(half)], dtype=DTYPE)])


def from_matrix(m: torch.Tensor) -> torch.Tensor:
    """Rotation matrix (3x3) to unit quaternion, Shepperd's method; not differentiated through"""
    m = m.detach()
    trace = m[0, 0] + m[1, 1] + m[2, 2]
    if trace > 0:
        s = torch.sqrt(trace + 1.0) * 2
        q = [(m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s, 0.25 * s]
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = torch.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        q = [0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s, (m[2, 1] - m[1, 2]) / s]
    elif m[1, 1] > m[2, 2]:
        s = torch.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        q = [(m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s, (m[0, 2] - m[2, 0]) / s]
    else:
        s = torch.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        q = [(m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s, (m[1, 0] - m[0, 1]) / s]
    return canonicalize(normalize(torch.stack(q).to(DTYPE)))


def random_unit(rng, *shape) -> torch.Tensor:
    """Uniformly distributed unit quaternions drawn from a numpy Generator"""
    raw = torch.as_tensor(rng.normal(size=(*shape, 4)), dtype=DTYPE)
    return normalize(raw)


def check_unit(q: torch.Tensor, field: str, tol: float = UNIT_TOLERANCE) -> None:
    with torch.no_grad():
        norms = torch.linalg.vector_norm(q, dim=-1).reshape(-1)
        bad = torch.nonzero(~(torch.abs(norms - 1.0) <= tol)).flatten()
    if bad.numel():
        index = bad[0].item()
        raise InvalidInputException(
            f"quaternion {index} has norm {norms[index].item():.12g}, expected 1", field=field
        )
