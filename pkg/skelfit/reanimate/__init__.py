"""Retargeting a fitted shape to target point sets and exporting pose playback."""

from .retarget import RetargetConfig, RetargetResult, retarget
from .playback import export_playback, pose_playback
