"""
skelfit - fit articulated template shapes to video silhouettes and optical flow,
retarget the fitted rigs and evaluate them against references.
"""

__version__ = "0.1.0"
