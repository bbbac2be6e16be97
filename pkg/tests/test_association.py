from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import smooth_noise
from flowtrack.association import (advance_tracklet, iou, match_detections, match_score,
                                   poa_index, predict_box_shift, resample_points, spawn_tracklet,
                                   update_confidence, NoLivePoints)
from flowtrack.core import (BoundingBox, Detection, IdAllocator, ImageBuffer, InstanceMask,
                            PipelineConfig, TrackPoint, TrackState, Tracklet, mask_contains)
from flowtrack.vision import FlowResult
from oracles import box_iou, greedy_match

CFG = PipelineConfig()
box_st = st.builds(BoundingBox, st.floats(-100, 100), st.floats(-100, 100),
                   st.floats(1, 80), st.floats(1, 80))


def make_tracklet(tid=1, points=(), box=(0, 0, 20, 20), conf=0.0, state=TrackState.SPURIOUS, cls=0):
    pts = [TrackPoint(float(x), float(y), tid, alive) for x, y, alive in points]
    return Tracklet(id=tid, class_id=cls, box=BoundingBox(*box), points=pts, confidence=conf, state=state)


def full_mask(x, y, w, h):
    return InstanceMask((x, y), np.ones((h, w), dtype=bool))


def test_iou_examples():
    a = BoundingBox(0, 0, 10, 10)
    assert iou(a, a) == 1.0
    assert iou(a, BoundingBox(20, 20, 5, 5)) == 0.0
    assert iou(a, BoundingBox(5, 0, 10, 10)) == pytest.approx(1 / 3, abs=1e-12)


@given(box_st, box_st, st.floats(-50, 50), st.floats(-50, 50))
def test_iou_properties(a, b, dx, dy):
    v = iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == pytest.approx(iou(b, a), abs=1e-12)
    assert v == pytest.approx(box_iou((a.x, a.y, a.w, a.h), (b.x, b.y, b.w, b.h)), abs=1e-9)
    a2 = BoundingBox(a.x + dx, a.y + dy, a.w, a.h)
    b2 = BoundingBox(b.x + dx, b.y + dy, b.w, b.h)
    assert iou(a2, b2) == pytest.approx(v, abs=1e-6)


def test_poa_examples():
    mask = full_mask(0, 0, 10, 10)
    inside = [(2, 2, True)] * 5
    outside = [(20, 20, True)] * 5
    assert poa_index(make_tracklet(points=inside).points, mask) == 1.0
    assert poa_index(make_tracklet(points=outside).points, mask) == 0.0
    mixed = [(1, 1, True), (2, 2, True), (3, 3, True), (30, 1, True), (40, 1, True)]
    assert poa_index(make_tracklet(points=mixed).points, mask) == 0.6
    assert poa_index([], mask) == 0.0
    dead_outside = [(1, 1, True), (30, 30, False)]
    assert poa_index(make_tracklet(points=dead_outside).points, mask) == 1.0


@given(st.lists(st.tuples(st.integers(-5, 15), st.integers(-5, 15)), min_size=1, max_size=8),
       st.integers(0, 9), st.integers(0, 9))
def test_poa_monotone_under_inside_point(pts, x, y):
    mask = full_mask(0, 0, 10, 10)
    before = poa_index([TrackPoint(a, b, 1) for a, b in pts], mask)
    after = poa_index([TrackPoint(a, b, 1) for a, b in pts] + [TrackPoint(x, y, 1)], mask)
    assert 0.0 <= before <= after <= 1.0


def test_match_single_perfect():
    t = make_tracklet(points=[(5, 5, True)] * 5)
    d = Detection(0, BoundingBox(0, 0, 10, 10), 0.9, full_mask(0, 0, 10, 10))
    r = match_detections([t], [d], CFG)
    assert r.pairs == [(1, 0)] and r.scores[(1, 0)] == 1.0


def test_match_gate_leaves_second_unmatched():
    mask = full_mask(0, 0, 10, 10)
    t1 = make_tracklet(1, [(1, 1, True)] * 4 + [(50, 50, True)])
    t2 = make_tracklet(2, [(1, 1, True)] * 2 + [(50, 50, True)] * 3)
    r = match_detections([t1, t2], [Detection(0, BoundingBox(0, 0, 10, 10), 0.9, mask)], CFG)
    assert r.pairs == [(1, 0)] and r.unmatched_tracklets == [2] and r.unmatched_detections == []


def test_unmatched_detection_and_class_gate():
    t = make_tracklet(points=[(5, 5, True)] * 5, cls=1)
    d = Detection(0, BoundingBox(0, 0, 10, 10), 0.9, full_mask(0, 0, 10, 10))
    r = match_detections([t], [d], CFG)
    assert r.pairs == [] and r.unmatched_detections == [0] and r.unmatched_tracklets == [1]


def test_iou_fallback_for_maskless_detection():
    t = make_tracklet(points=[(5, 5, True)], box=(0, 0, 10, 10))
    near = Detection(0, BoundingBox(2, 0, 10, 10), 0.9)
    far = Detection(0, BoundingBox(9.5, 0, 10, 10), 0.9)  # IoU 0.5/19.5 < 0.1
    assert match_score(t, near, CFG) == pytest.approx(8 / 12)
    assert match_score(t, far, CFG) is None


@st.composite
def matching_instance(draw):
    n = draw(st.integers(0, 6))
    m = draw(st.integers(0, 6))
    tracklets = []
    for i in range(n):
        pts = [(draw(st.integers(0, 40)), draw(st.integers(0, 40)), draw(st.booleans()))
               for _ in range(draw(st.integers(1, 5)))]
        bx, by = draw(st.integers(0, 30)), draw(st.integers(0, 30))
        tracklets.append(make_tracklet(i + 1, pts, (bx, by, 12, 12), cls=draw(st.integers(0, 1))))
    dets = []
    for _ in range(m):
        x, y = draw(st.integers(0, 30)), draw(st.integers(0, 30))
        w, h = draw(st.integers(4, 12)), draw(st.integers(4, 12))
        mask = full_mask(x, y, w, h) if draw(st.booleans()) else None
        dets.append(Detection(draw(st.integers(0, 1)), BoundingBox(x, y, w, h), 0.5, mask))
    return tracklets, dets


@settings(max_examples=200, deadline=None)
@given(matching_instance())
def test_match_equals_brute_force_greedy(inst):
    tracklets, dets = inst
    scores = {}
    for t in tracklets:
        for j, d in enumerate(dets):
            if t.class_id != d.class_id:
                continue
            alive = [p for p in t.points if p.alive]
            if d.mask is not None and alive:
                s = sum(mask_contains(d.mask, p.pos) for p in alive) / len(alive)
                if s >= CFG.poa_threshold:
                    scores[(t.id, j)] = s
            else:
                s = box_iou((t.box.x, t.box.y, t.box.w, t.box.h), (d.box.x, d.box.y, d.box.w, d.box.h))
                if s >= CFG.iou_gate and s > 0:
                    scores[(t.id, j)] = s
    r = match_detections(tracklets, dets, CFG)
    assert sorted(r.pairs) == greedy_match(scores)
    used_t = [p[0] for p in r.pairs]
    used_d = [p[1] for p in r.pairs]
    assert len(set(used_t)) == len(used_t) and len(set(used_d)) == len(used_d)
    assert set(used_t).isdisjoint(r.unmatched_tracklets)
    assert set(used_d).isdisjoint(r.unmatched_detections)
    assert len(used_d) + len(r.unmatched_detections) == len(dets)


def det(conf):
    return Detection(0, BoundingBox(0, 0, 10, 10), conf)


def test_confidence_examples():
    t = update_confidence(make_tracklet(conf=0.0), det(0.9), CFG)
    assert t.confidence == pytest.approx(0.6) and t.state == TrackState.SPURIOUS
    t = update_confidence(make_tracklet(conf=0.7), det(0.9), CFG)
    assert t.confidence == pytest.approx(1.3) and t.state == TrackState.CONFIDENT
    t = update_confidence(make_tracklet(conf=-0.4, state=TrackState.CONFIDENT), None, CFG)
    assert t.confidence == pytest.approx(-0.7) and t.state == TrackState.TERMINATED


def test_confidence_clamped_and_terminated_is_final():
    t = make_tracklet(conf=1.9, state=TrackState.CONFIDENT)
    t = update_confidence(t, det(1.0), CFG)
    assert t.confidence == 2.0
    t = update_confidence(make_tracklet(conf=-0.55), None, PipelineConfig(conf_terminate_threshold=-0.99))
    assert t.confidence == pytest.approx(-0.85)
    dead = make_tracklet(state=TrackState.TERMINATED)
    with pytest.raises(ValueError):
        update_confidence(dead, None, CFG)


@given(st.lists(st.one_of(st.none(), st.floats(0, 1)), min_size=1, max_size=40))
def test_lifecycle_never_goes_back(events):
    t = make_tracklet()
    for e in events:
        if t.state == TrackState.TERMINATED:
            break
        before = t.state
        t = update_confidence(t, None if e is None else det(e), CFG)
        assert t.state >= before
        assert -1.0 <= t.confidence <= 2.0


@given(st.floats(-0.59, 2.0), st.sampled_from([0.1, 0.2, 0.3, 0.5]), st.sampled_from([-0.3, -0.6, -0.9]))
def test_decay_terminates_within_bound(start, c_min, term):
    cfg = PipelineConfig(conf_required_per_detection=c_min, conf_terminate_threshold=term)
    if start <= term:
        return
    t = make_tracklet(conf=start, state=TrackState.CONFIDENT)
    bound = math.ceil((start - term) / c_min - 1e-6)
    probes = 0
    while t.state != TrackState.TERMINATED:
        t = update_confidence(t, None, cfg)
        probes += 1
    assert probes <= bound


def flows(*moves):
    return [FlowResult(dx, dy, ok, 0.0 if ok else math.inf) for dx, dy, ok in moves]


def test_box_shift_examples():
    t = make_tracklet(points=[(10, 10, True)] * 5)
    assert predict_box_shift(t, flows(*[(2, 0, True)] * 5)) == (2, 0)
    assert predict_box_shift(t, flows(*[(2, 0, True)] * 4, (9, 9, False))) == (2, 0)
    assert predict_box_shift(t, flows((1, 0, True), (3, 0, True), (2, 2, True), (2, -2, True),
                                      (2, 0, True))) == (2, 0)
    with pytest.raises(NoLivePoints):
        predict_box_shift(t, flows(*[(0, 0, False)] * 5))


def test_advance_moves_box_and_kills_lost_points():
    t = make_tracklet(points=[(10, 10, True)] * 3, box=(0, 0, 20, 20))
    t2 = advance_tracklet(t, flows((2, 1, True), (2, 1, True), (0, 0, False)))
    assert t2.box == BoundingBox(2, 1, 20, 20)
    assert [p.alive for p in t2.points] == [True, True, False]
    t3 = advance_tracklet(t2, flows((0, 0, False), (0, 0, False)))
    assert t3.needs_redetect and t3.box == t2.box and not t3.alive_points


def textured(size=80, seed=0):
    return ImageBuffer(smooth_noise(size, size, seed, sigma=1.0))


def test_resample_on_good_match():
    img = textured()
    mask = full_mask(20, 20, 30, 30)
    d = Detection(0, BoundingBox(20, 20, 30, 30), 0.9, mask)
    t = make_tracklet(points=[(25, 25, True)] * 5, box=(18, 18, 30, 30))
    t2, ok = resample_points(t, d, img, CFG, frame_index=7)
    assert ok and t2.box == d.box and t2.last_redetect_frame == 7
    assert len(t2.points) == 5 and all(mask_contains(mask, p.pos) and p.id == 1 for p in t2.points)


def test_resample_demoted_when_points_left_mask():
    img = textured()
    d = Detection(0, BoundingBox(20, 20, 30, 30), 0.9, full_mask(20, 20, 30, 30))
    t = make_tracklet(points=[(25, 25, True)] * 2 + [(70, 70, True)] * 3, box=(0, 0, 10, 10))
    t2, ok = resample_points(t, d, img, CFG, frame_index=7)
    assert not ok and t2 == t


def test_resample_count_limited_by_corners():
    img = ImageBuffer.blank(60, 60, value=50)
    d = Detection(0, BoundingBox(10, 10, 20, 20), 0.9, full_mask(10, 10, 20, 20))
    t2, ok = resample_points(make_tracklet(points=[(15, 15, True)]), d, img, CFG, 1)
    assert ok and len(t2.points) == 1


def test_spawn_examples():
    img = textured()
    ids = IdAllocator()
    d = Detection(0, BoundingBox(20, 20, 30, 30), 0.95, full_mask(20, 20, 30, 30))
    a = spawn_tracklet(d, img, CFG, ids)
    b = spawn_tracklet(d, img, CFG, ids)
    assert a.state == TrackState.SPURIOUS and a.confidence == pytest.approx(0.65)
    assert a.id != b.id and all(p.id == a.id for p in a.points)
    assert spawn_tracklet(Detection(0, BoundingBox(1, 1, 5, 5), 0.9), img, CFG, ids) is None
