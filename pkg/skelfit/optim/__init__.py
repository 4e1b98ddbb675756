# File: skelfit/optim/__init__.py
"""Gradients, Adam, initialization, the two-stage fit and camera search."""

from .config import CameraSearchConfig, FitConfig
from .adam import AdamMoments, adam_step
from .variables import VARIABLE_CLASSES, FitVariables, energy_and_gradients, gradients
from .initialization import init_scale, kmeans_skinning, mask_bbox
from .camera_search import CameraEstimate, estimate_camera, look_at
from .fit import FitResult, FitState, fit, initial_params, initial_poses
from .gradcheck import GradcheckCase, GradcheckReport, gradients_agree, make_scene, run_gradcheck
