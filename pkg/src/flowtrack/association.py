"""Re-detection matching, tracklet confidence lifecycle and point-driven box motion."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .core import (BoundingBox, Detection, IdAllocator, ImageBuffer, InstanceMask,
                   PipelineConfig, TrackPoint, Tracklet, TrackState, mask_contains,
                   translate_box)
from .vision import FlowResult, select_track_points

CONFIDENCE_FLOOR = -1.0
CONFIDENCE_CEIL = 2.0
_THRESHOLD_EPS = 1e-9


class NoLivePoints(Exception):
    """Every point of a tracklet was lost by the optical flow."""


def iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return min(1.0, inter / (a.area + b.area - inter))


def poa_index(points: Sequence[TrackPoint], mask: InstanceMask) -> float:
    """Fraction of alive points landing on the mask foreground (0 with no alive points)."""
    alive = [p for p in points if p.alive]
    if not alive:
        return 0.0
    inside = sum(1 for p in alive if mask_contains(mask, p.pos))
    return inside / len(alive)


@dataclass
class MatchResult:
    pairs: list[tuple[int, int]] = field(default_factory=list)
    unmatched_detections: list[int] = field(default_factory=list)
    unmatched_tracklets: list[int] = field(default_factory=list)
    scores: dict[tuple[int, int], float] = field(default_factory=dict)


def match_score(t: Tracklet, d: Detection, cfg: PipelineConfig) -> float | None:
    """Score of pairing ``t`` with ``d``, or None when the pair is inadmissible.

    PoA is used whenever the detection has a mask and the tracklet still has
    live points; otherwise box IoU decides.
    """
    if t.class_id != d.class_id:
        return None
    if d.mask is not None and t.alive_points:
        s = poa_index(t.points, d.mask)
        return s if s >= cfg.poa_threshold else None
    s = iou(t.box, d.box)
    return s if s >= cfg.iou_gate and s > 0 else None


def match_detections(tracklets: Sequence[Tracklet], detections: Sequence[Detection],
                     cfg: PipelineConfig) -> MatchResult:
    candidates = []
    for t in tracklets:
        for j, d in enumerate(detections):
            s = match_score(t, d, cfg)
            if s is not None:
                candidates.append((-s, t.id, j))
    candidates.sort()
    used_t: set[int] = set()
    used_d: set[int] = set()
    result = MatchResult()
    for neg, tid, j in candidates:
        if tid in used_t or j in used_d:
            continue
        used_t.add(tid)
        used_d.add(j)
        result.pairs.append((tid, j))
        result.scores[(tid, j)] = -neg
    result.unmatched_detections = [j for j in range(len(detections)) if j not in used_d]
    result.unmatched_tracklets = [t.id for t in tracklets if t.id not in used_t]
    return result


def update_confidence(tracklet: Tracklet, detection: Detection | None,
                      cfg: PipelineConfig) -> Tracklet:
    """Apply one probe outcome: a matched detection, or ``None`` for a probe without match.

    Callers must not invoke this for tracklets whose window was not probed.
    """
    if tracklet.state == TrackState.TERMINATED:
        raise ValueError(f"tracklet {tracklet.id} is terminated")
    evidence = detection.confidence if detection is not None else 0.0
    conf = tracklet.confidence + evidence - cfg.c_min
    conf = min(CONFIDENCE_CEIL, max(CONFIDENCE_FLOOR, conf))
    state = tracklet.state
    # the tolerance keeps sums like 0.6 - 4 * 0.3 on the intended side of a threshold
    if conf <= cfg.conf_terminate_threshold + _THRESHOLD_EPS:
        state = TrackState.TERMINATED
    elif state == TrackState.SPURIOUS and conf >= cfg.conf_validate_threshold - _THRESHOLD_EPS:
        state = TrackState.CONFIDENT
    return dataclasses.replace(tracklet, confidence=conf, state=state)


def predict_box_shift(tracklet: Tracklet, flows: Sequence[FlowResult]) -> tuple[float, float]:
    """Mean displacement of the converged flows; raises NoLivePoints if there are none.

    ``flows`` lines up with ``tracklet.alive_points``.
    """
    moved = [f for f in flows if f.converged]
    if not moved:
        raise NoLivePoints(f"tracklet {tracklet.id} has no converged points")
    return (sum(f.dx for f in moved) / len(moved), sum(f.dy for f in moved) / len(moved))


def advance_tracklet(tracklet: Tracklet, flows: Sequence[FlowResult]) -> Tracklet:
    """Move alive points by their flow, kill failed ones and shift the box by the mean."""
    alive = tracklet.alive_points
    if len(alive) != len(flows):
        raise ValueError("one flow result per alive point expected")
    points = [TrackPoint(p.x + f.dx, p.y + f.dy, p.id, True) if f.converged
              else TrackPoint(p.x, p.y, p.id, False)
              for p, f in zip(alive, flows)]
    try:
        shift = predict_box_shift(tracklet, flows)
    except NoLivePoints:
        return dataclasses.replace(tracklet, points=points, needs_redetect=True)
    return dataclasses.replace(tracklet, points=points, box=translate_box(tracklet.box, shift))


def resample_points(tracklet: Tracklet, detection: Detection, img: ImageBuffer,
                    cfg: PipelineConfig, frame_index: int) -> tuple[Tracklet, bool]:
    """Re-anchor a matched tracklet on its detection.

    Returns the updated tracklet and whether object persistence was
    confirmed. When too few points remain inside the new mask the tracklet
    is returned unchanged and the caller treats the probe as a miss.
    """
    if detection.mask is None:
        raise ValueError("resampling needs a detection mask")
    if tracklet.alive_points and poa_index(tracklet.points, detection.mask) < cfg.mask_containment_fraction:
        return tracklet, False
    points = select_track_points(img, detection.mask, cfg.points_per_instance, tracklet.id,
                                 k=cfg.harris_k)
    return dataclasses.replace(tracklet, points=points, box=detection.box,
                               last_redetect_frame=frame_index, needs_redetect=False), True


def spawn_tracklet(detection: Detection, img: ImageBuffer, cfg: PipelineConfig,
                   ids: IdAllocator, frame_index: int = 0) -> Tracklet | None:
    if detection.mask is None:
        return None
    tid = ids.allocate()
    points = select_track_points(img, detection.mask, cfg.points_per_instance, tid, k=cfg.harris_k)
    conf = min(CONFIDENCE_CEIL, max(CONFIDENCE_FLOOR, detection.confidence - cfg.c_min))
    return Tracklet(id=tid, class_id=detection.class_id, box=detection.box, points=points,
                    confidence=conf, state=TrackState.SPURIOUS,
                    last_redetect_frame=frame_index, birth_frame=frame_index)


def live(tracklets: Iterable[Tracklet]) -> list[Tracklet]:
    return [t for t in tracklets if t.state != TrackState.TERMINATED]
