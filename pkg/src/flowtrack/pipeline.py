"""Per-frame orchestration: flow propagation, scheduled window re-detection, association."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .association import (advance_tracklet, live, match_detections, resample_points,
                          spawn_tracklet, update_confidence)
from .core import (BoundingBox, Detection, IdAllocator, ImageBuffer, PipelineConfig, Tracklet,
                   TrackState, box_center)
from .detector.base import Detector, DetectorError
from .slicing import (Window, classify_windows, flag_urgent, merge_window_detections,
                      next_windows, slice_grid, window_of_point)
from .vision import Pyramid, build_pyramid, lk_track_points, to_grayscale

log = logging.getLogger(__name__)

STAGES = ("grayscale", "pyramid", "lk", "detect", "associate")


@dataclass(frozen=True)
class OutputRow:
    id: int
    class_id: int
    box: BoundingBox
    confidence: float
    label: int  # 1 confident, 0 spurious


@dataclass
class FrameResult:
    frame_index: int
    rows: list[OutputRow]
    timings_us: dict[str, int]
    stage_started_ns: dict[str, int] = field(default_factory=dict)
    probed_windows: list[int] = field(default_factory=list)
    probed_tracklets: list[int] = field(default_factory=list)
    spawned: list[int] = field(default_factory=list)
    terminated: list[int] = field(default_factory=list)
    degraded: bool = False


@dataclass
class PipelineState:
    config: PipelineConfig
    frame_index: int
    frame_size: tuple[int, int]
    tracklets: dict[int, Tracklet]
    windows: list[Window]
    prev_pyramid: Pyramid
    id_allocator: IdAllocator
    timing_us: dict[str, int] = field(default_factory=lambda: dict.fromkeys(STAGES, 0))
    threads: int = 1
    last_result: FrameResult | None = None


class _Stopwatch:
    def __init__(self):
        self.us: dict[str, int] = dict.fromkeys(STAGES, 0)
        self.started: dict[str, int] = {}
        self._stage = None
        self._t0 = 0

    def start(self, stage: str) -> None:
        self.stop()
        self._stage = stage
        self._t0 = time.perf_counter_ns()
        self.started.setdefault(stage, self._t0)

    def stop(self) -> None:
        if self._stage is not None:
            self.us[self._stage] += (time.perf_counter_ns() - self._t0) // 1000
            self._stage = None


def _luma(frame: ImageBuffer) -> ImageBuffer:
    return to_grayscale(frame) if frame.channels == 3 else frame


def _probe(frame: ImageBuffer, windows: Sequence[Window], indices: Sequence[int],
           detector: Detector, frame_index: int, threads: int) -> list[Detection]:
    def one(i):
        w = windows[i]
        x, y = w.origin
        region = frame.crop(x, y, int(w.rect.w), int(w.rect.h))
        return w, detector.detect(region, (x, y), frame_index)

    if threads > 1 and len(indices) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_window = list(pool.map(one, indices))
    else:
        per_window = [one(i) for i in indices]
    return merge_window_detections(per_window)


def _rows(tracklets: Iterable[Tracklet]) -> list[OutputRow]:
    return [OutputRow(t.id, t.class_id, t.box, t.confidence, t.label)
            for t in sorted(tracklets, key=lambda t: t.id) if t.state != TrackState.TERMINATED]


def init_tracking(frame0: ImageBuffer, detector: Detector, cfg: PipelineConfig,
                  threads: int = 1) -> PipelineState:
    """Full-frame scan of frame 0; every masked detection starts a spurious tracklet."""
    sw = _Stopwatch()
    sw.start("grayscale")
    gray = _luma(frame0)
    sw.start("pyramid")
    pyr = build_pyramid(gray, cfg.pyramid_levels, cfg.lk_window_radius)
    sw.stop()
    W, H = frame0.width, frame0.height
    windows = slice_grid(W, H, cfg.window_size, cfg.window_overlap_ratio)
    sw.start("detect")
    dets = _probe(frame0, windows, [w.index for w in windows], detector, 0, threads)
    for w in windows:
        w.probes += 1
        w.last_probe_frame = 0
    sw.start("associate")
    ids = IdAllocator()
    tracklets: dict[int, Tracklet] = {}
    spawned = []
    for d in dets:
        t = spawn_tracklet(d, gray, cfg, ids, 0)
        if t is not None:
            tracklets[t.id] = t
            spawned.append(t.id)
    classify_windows(windows, tracklets.values(), W, H)
    sw.stop()
    state = PipelineState(cfg, 0, (W, H), tracklets, windows, pyr, ids, threads=threads)
    for k, v in sw.us.items():
        state.timing_us[k] += v
    state.last_result = FrameResult(0, _rows(tracklets.values()), sw.us, sw.started,
                                    [w.index for w in windows], [], spawned, [])
    return state


def step(state: PipelineState, frame: ImageBuffer,
         detector: Detector) -> tuple[PipelineState, FrameResult]:
    cfg = state.config
    W, H = state.frame_size
    if (frame.width, frame.height) != (W, H):
        raise ValueError(f"frame is {frame.width}x{frame.height}, sequence is {W}x{H}")
    t_idx = state.frame_index + 1
    sw = _Stopwatch()

    sw.start("grayscale")
    gray = _luma(frame)
    sw.start("pyramid")
    pyr = build_pyramid(gray, cfg.pyramid_levels, cfg.lk_window_radius)

    sw.start("lk")
    active = live(state.tracklets.values())
    points = [p for t in active for p in t.alive_points]
    flows = lk_track_points(state.prev_pyramid, pyr, points, window_radius=cfg.lk_window_radius,
                            max_iterations=cfg.lk_max_iterations, epsilon=cfg.lk_epsilon)
    k = 0
    for t in active:
        n = len(t.alive_points)
        state.tracklets[t.id] = advance_tracklet(t, flows[k:k + n])
        k += n
    active = live(state.tracklets.values())

    sw.start("detect")
    classify_windows(state.windows, active, W, H)
    flag_urgent(state.windows, active, W, H)
    schedule = next_windows(state.windows, t_idx, cfg)
    degraded = False
    try:
        dets = _probe(frame, state.windows, schedule, detector, t_idx, state.threads)
    except DetectorError as exc:
        log.warning("frame %d: detector failed (%s); coasting on optical flow", t_idx, exc)
        degraded = True
        dets = []

    sw.start("associate")
    probed_tracklets, spawned, terminated = [], [], []
    if not degraded:
        probed = [state.windows[i] for i in schedule]
        probed_ids = set()
        for t in active:
            cx, cy = box_center(t.box)
            if any(w in probed for w in window_of_point(state.windows, cx, cy, W, H)):
                probed_ids.add(t.id)
        candidates = [t for t in active
                      if t.id in probed_ids or any(w.rect.intersects(t.box) for w in probed)]
        match = match_detections(candidates, dets, cfg)
        for tid, j in match.pairs:
            t, d = state.tracklets[tid], dets[j]
            if d.mask is not None:
                t2, confirmed = resample_points(t, d, gray, cfg, t_idx)
                t = update_confidence(t2, d if confirmed else None, cfg)
            else:
                t = update_confidence(t, d, cfg)
                t.box = d.box
                t.last_redetect_frame = t_idx
            state.tracklets[tid] = t
            probed_tracklets.append(tid)
        for tid in match.unmatched_tracklets:
            if tid in probed_ids:
                state.tracklets[tid] = update_confidence(state.tracklets[tid], None, cfg)
                probed_tracklets.append(tid)
        for tid in probed_tracklets:
            if state.tracklets[tid].state == TrackState.TERMINATED:
                terminated.append(tid)
        for j in match.unmatched_detections:
            t = spawn_tracklet(dets[j], gray, cfg, state.id_allocator, t_idx)
            if t is not None:
                state.tracklets[t.id] = t
                spawned.append(t.id)
    sw.stop()

    state.prev_pyramid = pyr
    state.frame_index = t_idx
    for key, v in sw.us.items():
        state.timing_us[key] += v
    result = FrameResult(t_idx, _rows(state.tracklets.values()), sw.us, sw.started, list(schedule),
                         sorted(probed_tracklets), spawned, sorted(terminated), degraded)
    state.last_result = result
    return state, result


@dataclass
class RunSummary:
    frames: int
    fps: float
    step_seconds: float
    init_seconds: float
    stage_us: dict[str, int]
    spawned: int
    confirmed: int
    terminated: int
    live_at_end: int
    degraded_frames: int

    def report(self) -> str:
        lines = [
            f"frames = {self.frames}",
            f"fps = {self.fps:.4f}",
            f"init_seconds = {self.init_seconds:.6f}",
            f"step_seconds = {self.step_seconds:.6f}",
        ]
        lines += [f"stage_{k}_seconds = {v / 1e6:.6f}" for k, v in self.stage_us.items()]
        lines += [
            f"tracklets_spawned = {self.spawned}",
            f"tracklets_confirmed = {self.confirmed}",
            f"tracklets_terminated = {self.terminated}",
            f"tracklets_live_at_end = {self.live_at_end}",
            f"degraded_frames = {self.degraded_frames}",
        ]
        return "\n".join(lines) + "\n"


def run(source: Sequence[ImageBuffer], detector: Detector, cfg: PipelineConfig,
        sinks: Sequence[Callable[[FrameResult], None]] = (), threads: int = 1) -> RunSummary:
    """Init on the first frame, step through the rest, feed every FrameResult to ``sinks``.

    fps counts stepped frames over the time spent inside ``step``; frame
    decoding and sink output are excluded. A one-frame source reports the
    rate of the initial scan instead.
    """
    it = iter(source)
    try:
        frame0 = next(it)
    except StopIteration:
        raise ValueError("run needs at least one frame") from None
    t0 = time.perf_counter()
    state = init_tracking(frame0, detector, cfg, threads)
    init_s = time.perf_counter() - t0
    for sink in sinks:
        sink(state.last_result)
    confirmed = {r.id for r in state.last_result.rows if r.label == 1}
    step_s = 0.0
    n_steps = 0
    degraded = 0
    for frame in it:
        t0 = time.perf_counter()
        state, result = step(state, frame, detector)
        step_s += time.perf_counter() - t0
        n_steps += 1
        degraded += result.degraded
        confirmed.update(r.id for r in result.rows if r.label == 1)
        for sink in sinks:
            sink(result)
    fps = n_steps / step_s if n_steps else 1.0 / max(init_s, 1e-9)
    tracklets = state.tracklets.values()
    return RunSummary(
        frames=n_steps + 1, fps=fps, step_seconds=step_s, init_seconds=init_s,
        stage_us=dict(state.timing_us), spawned=state.id_allocator.next_id - 1,
        confirmed=len(confirmed),
        terminated=sum(t.state == TrackState.TERMINATED for t in tracklets),
        live_at_end=sum(t.state != TrackState.TERMINATED for t in tracklets),
        degraded_frames=degraded)


def mot_sink(writer) -> Callable[[FrameResult], None]:
    def sink(result: FrameResult) -> None:
        writer.add(result.frame_index, [(r.id, r.box, r.confidence, r.label) for r in result.rows])
    return sink
