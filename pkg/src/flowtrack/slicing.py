"""Frame tiling into detector windows, window priority classes and probe scheduling."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .association import iou
from .core import BoundingBox, Detection, PipelineConfig, Tracklet, TrackState, box_center

MERGE_IOU = 0.5


class WindowClass(enum.Enum):
    EDGE = "edge"
    INSTANCE = "instance"
    BACKGROUND = "background"


@dataclass
class Window:
    index: int
    rect: BoundingBox
    klass: WindowClass = WindowClass.BACKGROUND
    probes: int = 0
    last_probe_frame: int = 0
    urgent: bool = False
    credit: float = 0.0

    @property
    def origin(self) -> tuple[int, int]:
        return int(self.rect.x), int(self.rect.y)


def _axis_positions(length: int, size: int, stride: int) -> list[int]:
    if length <= size:
        return [0]
    pos = list(range(0, length - size, stride))
    pos.append(length - size)
    return pos


def slice_grid(frame_w: int, frame_h: int, window_size: int = 640,
               overlap_ratio: float = 0.2) -> list[Window]:
    """Row-major overlapping tiles; the last row and column are pulled back inside the frame."""
    if frame_w <= 0 or frame_h <= 0 or window_size <= 0:
        raise ValueError("frame and window dimensions must be positive")
    if not 0.0 <= overlap_ratio < 1.0:
        raise ValueError("overlap_ratio must be in [0, 1)")
    stride = max(1, math.floor(window_size * (1.0 - overlap_ratio)))
    ww, wh = min(window_size, frame_w), min(window_size, frame_h)
    windows = []
    for y in _axis_positions(frame_h, window_size, stride):
        for x in _axis_positions(frame_w, window_size, stride):
            windows.append(Window(len(windows), BoundingBox(x, y, ww, wh)))
    return windows


def touches_border(rect: BoundingBox, frame_w: int, frame_h: int) -> bool:
    return rect.x <= 0 or rect.y <= 0 or rect.x2 >= frame_w or rect.y2 >= frame_h


def classify_windows(windows: Sequence[Window], tracklets: Iterable[Tracklet],
                     frame_w: int, frame_h: int) -> Sequence[Window]:
    boxes = [t.box for t in tracklets if t.state != TrackState.TERMINATED]
    for w in windows:
        if any(w.rect.intersects(b) for b in boxes):
            w.klass = WindowClass.INSTANCE
        elif touches_border(w.rect, frame_w, frame_h):
            w.klass = WindowClass.EDGE
        else:
            w.klass = WindowClass.BACKGROUND
    return windows


def window_of_point(windows: Sequence[Window], x: float, y: float,
                    frame_w: int, frame_h: int) -> list[Window]:
    """Windows containing the point after clamping it into the frame."""
    cx = min(max(x, 0.0), frame_w - 1e-6)
    cy = min(max(y, 0.0), frame_h - 1e-6)
    return [w for w in windows if w.rect.contains_point(cx, cy)]


def flag_urgent(windows: Sequence[Window], tracklets: Iterable[Tracklet],
                frame_w: int, frame_h: int) -> None:
    """Force a probe for tracklets whose optical-flow points were all lost."""
    for t in tracklets:
        if t.needs_redetect and t.state != TrackState.TERMINATED:
            cx, cy = box_center(t.box)
            for w in window_of_point(windows, cx, cy, frame_w, frame_h):
                w.klass = WindowClass.INSTANCE
                w.urgent = True


def boost(w: Window, cfg: PipelineConfig) -> int:
    if w.klass == WindowClass.EDGE:
        return cfg.edge_rate_boost
    if w.klass == WindowClass.INSTANCE:
        return cfg.instance_rate_boost
    return 1


def next_windows(windows: Sequence[Window], frame_index: int, cfg: PipelineConfig) -> list[int]:
    """Pick ``windows_per_frame`` windows and stamp them as probed.

    Each window accrues credit at its class boost every frame, so credit grows
    with staleness times boost. A probed window pays back the total boost
    instead of resetting to zero, which keeps relative phase between windows.
    Long-run probe rates are then proportional to boost and, for fixed classes,
    no window waits longer than the total boost in frames. Urgent windows go
    first; ties resolve to the lowest index.
    """
    if not windows:
        raise ValueError("no windows to schedule")
    k = min(cfg.windows_per_frame, len(windows))
    if k == len(windows):
        chosen = list(windows)
        for w in chosen:
            w.credit = 0.0
    else:
        total = float(sum(boost(w, cfg) for w in windows))
        for w in windows:
            # a window cannot take more than one probe per frame, so cap what it banks
            w.credit = min(w.credit + k * boost(w, cfg), total)
        ranked = sorted(windows, key=lambda w: (not w.urgent, -w.credit, w.index))
        chosen = ranked[:k]
        for w in chosen:
            w.credit -= total
    for w in chosen:
        w.last_probe_frame = frame_index
        w.probes += 1
        w.urgent = False
    return [w.index for w in chosen]


def nms(detections: Sequence[Detection], threshold: float = MERGE_IOU) -> list[Detection]:
    """Greedy per-class suppression keeping the more confident of any pair with IoU > threshold."""
    order = sorted(range(len(detections)), key=lambda i: -detections[i].confidence)
    kept: list[Detection] = []
    for i in order:
        d = detections[i]
        if all(k.class_id != d.class_id or iou(k.box, d.box) <= threshold for k in kept):
            kept.append(d)
    return kept


def merge_window_detections(per_window: Iterable[tuple[Window, Sequence[Detection]]],
                            threshold: float = MERGE_IOU) -> list[Detection]:
    ordered = sorted(per_window, key=lambda wd: wd[0].index)
    frame_dets = []
    for w, dets in ordered:
        ox, oy = w.origin
        frame_dets.extend(d.translated(ox, oy) for d in dets)
    return nms(frame_dets, threshold)
