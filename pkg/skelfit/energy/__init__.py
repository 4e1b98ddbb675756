# File: skelfit/energy/__init__.py
"""Fitting objective: visual-cue consistency, motion smoothness, symmetry and Chamfer."""

from .terms import chamfer, e_cue, e_smooth, e_symm, householder_reflect, squared_distances
from .objective import (
    TERMS,
    EnergyBreakdown,
    EnergyWeights,
    RenderedScene,
    SceneState,
    check_finite,
    flow_visibility,
    render_scene,
    total_energy,
)
