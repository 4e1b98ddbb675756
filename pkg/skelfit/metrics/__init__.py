"""
Evaluation suite: volumetric IoU, vertex and joint Chamfer, bone matching and reanimation error.
Chamfer values are squared distances, the same definition the fitting energy uses.
"""

from .voxel import VoxelGrid, miou, scale_search, union_bounds, voxelize
from .suite import (
    Assignment,
    MetricReport,
    bone_vertex_sets,
    joint_cd,
    lap_solve,
    mean_chamfer,
    skinning_distance,
)
from .reanimation import reanimation_error
