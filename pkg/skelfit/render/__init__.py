# File: skelfit/render/__init__.py
"""Pinhole projection, soft and hard silhouette rasterization, and flow rendering."""

from .camera import Camera, project
from .raster import PixelPairs, rasterize_hard, rasterize_soft
from .flow import FlowMap, render_flow, visible_faces
