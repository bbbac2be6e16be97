"""Sparse optical-flow multi-object tracking with scheduled window re-detection."""

__version__ = "0.1.0"

from .core import (BoundingBox, Detection, ImageBuffer, InstanceMask, PipelineConfig, TrackPoint,
                   Tracklet, TrackState, box_center, mask_contains, translate_box)

__all__ = [
    "BoundingBox", "Detection", "ImageBuffer", "InstanceMask", "PipelineConfig", "TrackPoint",
    "Tracklet", "TrackState", "box_center", "mask_contains", "translate_box",
]
