from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import smooth_noise
from flowtrack.core import BoundingBox, ImageBuffer, InstanceMask, TrackPoint, mask_contains
from flowtrack.vision import (LKTrace, _reduce, build_pyramid, harris_response, lk_track_points,
                              pyramid_dims, select_track_points, to_grayscale)
from oracles import gray_pixel, reduce_level


def rgb(r, g, b, w=3, h=2):
    return ImageBuffer(np.tile(np.array([r, g, b], dtype=np.uint8), (h, w, 1)))


@pytest.mark.parametrize("color,luma", [((255, 255, 255), 255), ((255, 0, 0), 76),
                                         ((0, 0, 255), 29), ((0, 0, 0), 0)])
def test_grayscale_examples(color, luma):
    out = to_grayscale(rgb(*color))
    assert out.channels == 1 and np.all(out.data == luma)


def test_grayscale_matches_formula_on_random_pixels():
    rng = np.random.default_rng(3)
    data = rng.integers(0, 256, (40, 50, 3), dtype=np.uint8)
    got = to_grayscale(ImageBuffer(data)).data
    want = np.array([[gray_pixel(*map(int, px)) for px in row] for row in data])
    assert np.array_equal(got, want)


def test_grayscale_rejects_single_channel():
    with pytest.raises(ValueError):
        to_grayscale(ImageBuffer.blank(3, 3))


def test_pyramid_4k_top_level():
    assert pyramid_dims(3840, 2160, 5)[-1] == (120, 68)
    pyr = build_pyramid(ImageBuffer.blank(3840, 2160, value=9), 5)
    assert (pyr.levels[-1].width, pyr.levels[-1].height) == (120, 68)
    assert len(pyr.levels) == 6
    assert all(np.all(lv.data == 9) for lv in pyr.levels)


def test_pyramid_m0_is_input():
    img = ImageBuffer(smooth_noise(30, 40, 1))
    pyr = build_pyramid(img, 0)
    assert len(pyr.levels) == 1 and pyr.levels[0] is img


def test_pyramid_too_small_raises():
    with pytest.raises(ValueError, match="too small"):
        build_pyramid(ImageBuffer.blank(300, 300), 5, window_radius=10)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 23), st.integers(1, 23), st.integers(0, 2**32 - 1))
def test_reduce_matches_loop_oracle(w, h, seed):
    data = np.random.default_rng(seed).integers(0, 256, (h, w), dtype=np.uint8)
    assert np.array_equal(_reduce(data), reduce_level(data))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4096), st.integers(1, 4096))
def test_level_dims_ceil_halve(w, h):
    dims = pyramid_dims(w, h, 6)
    for (pw, ph), (cw, ch) in zip(dims, dims[1:]):
        assert (cw, ch) == (-(-pw // 2), -(-ph // 2))


def test_harris_constant_is_zero():
    img = ImageBuffer.blank(20, 20, value=128)
    assert np.all(harris_response(img, BoundingBox(0, 0, 20, 20)) == 0)


def test_harris_single_pixel_positive():
    data = np.zeros((21, 21), dtype=np.uint8)
    data[10, 10] = 255
    r = harris_response(ImageBuffer(data), BoundingBox(0, 0, 21, 21))
    assert r[9:12, 9:12].max() > 0


def test_harris_vertical_step_is_not_a_corner():
    data = np.zeros((20, 20), dtype=np.uint8)
    data[:, 10:] = 200
    r = harris_response(ImageBuffer(data), BoundingBox(0, 0, 20, 20))
    assert np.all(r[3:17, 8:12] <= 0)


@given(st.integers(0, 20), st.integers(0, 20))
def test_harris_argmax_moves_with_image(dx, dy):
    base = np.zeros((60, 60), dtype=np.uint8)
    base[15:30, 15:30] = 255
    shifted = np.zeros_like(base)
    shifted[15 + dy:30 + dy, 15 + dx:30 + dx] = 255
    region = BoundingBox(0, 0, 60, 60)
    a = harris_response(ImageBuffer(base), region)
    b = harris_response(ImageBuffer(shifted), region)
    ay, ax = np.unravel_index(np.argmax(a), a.shape)
    by, bx = np.unravel_index(np.argmax(b), b.shape)
    assert (bx - ax, by - ay) == (dx, dy)


def test_select_points_constant_region_gives_centroid():
    img = ImageBuffer.blank(50, 50, value=90)
    mask = InstanceMask((10, 10), np.ones((11, 11), dtype=bool))
    pts = select_track_points(img, mask, 5, track_id=3)
    assert [(p.x, p.y, p.id) for p in pts] == [(15.0, 15.0, 3)]


def test_select_points_checkerboard():
    yy, xx = np.indices((60, 60))
    img = ImageBuffer((((xx // 6) + (yy // 6)) % 2 * 255).astype(np.uint8))
    mask = InstanceMask((10, 10), np.ones((40, 40), dtype=bool))
    pts = select_track_points(img, mask, 5, track_id=1)
    assert len(pts) == 5
    for i, p in enumerate(pts):
        assert mask_contains(mask, p.pos)
        for q in pts[i + 1:]:
            assert np.hypot(p.x - q.x, p.y - q.y) >= 3


def test_select_single_point_is_argmax_interior():
    img = ImageBuffer(smooth_noise(40, 40, 5, sigma=1.5))
    mask = InstanceMask((5, 5), np.ones((30, 30), dtype=bool))
    (p,) = select_track_points(img, mask, 1, track_id=1)
    r = harris_response(img, BoundingBox(5, 5, 30, 30))
    inner = np.full_like(r, -np.inf)
    inner[1:-1, 1:-1] = r[1:-1, 1:-1]
    y, x = np.unravel_index(np.argmax(inner), r.shape)
    assert (p.x, p.y) == (x + 5, y + 5)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**16), st.integers(1, 6), st.integers(0, 30), st.integers(0, 30))
def test_selected_points_always_inside_mask(seed, n, ox, oy):
    img = ImageBuffer(smooth_noise(48, 48, seed, sigma=1.0))
    rng = np.random.default_rng(seed)
    bits = rng.random((14, 14)) < 0.6
    bits[7, 7] = True
    mask = InstanceMask((ox, oy), bits)
    pts = select_track_points(img, mask, n, track_id=2)
    assert 1 <= len(pts) <= n
    assert all(mask_contains(mask, p.pos) for p in pts)


def shifted_pair(h, w, dx, dy, seed, m=3):
    big = smooth_noise(h + 40, w + 40, seed)
    prev = big[20:20 + h, 20:20 + w]
    nxt = big[20 - dy:20 - dy + h, 20 - dx:20 - dx + w]
    return build_pyramid(ImageBuffer(prev), m), build_pyramid(ImageBuffer(nxt), m)


def test_lk_identical_frames_zero_motion():
    prev, _ = shifted_pair(200, 200, 0, 0, 1)
    flows = lk_track_points(prev, prev, [TrackPoint(100, 100, 1), TrackPoint(60.5, 80.25, 1)])
    for f in flows:
        assert f.converged and abs(f.dx) < 1e-6 and abs(f.dy) < 1e-6


def test_lk_recovers_integer_shift():
    prev, nxt = shifted_pair(200, 200, 3, 2, 7)
    (f,) = lk_track_points(prev, nxt, [TrackPoint(100, 90, 1)])
    assert f.converged and np.hypot(f.dx - 3, f.dy - 2) < 0.25


def test_lk_flat_region_not_converged():
    data = smooth_noise(200, 200, 2)
    data[60:140, 60:140] = 100
    pyr = build_pyramid(ImageBuffer(data), 2)
    (f,) = lk_track_points(pyr, pyr, [TrackPoint(100, 100, 1)])
    assert not f.converged


def test_lk_window_leaving_frame_not_converged():
    prev, nxt = shifted_pair(200, 200, 2, 0, 4)
    (f,) = lk_track_points(prev, nxt, [TrackPoint(3, 100, 1)])
    assert not f.converged


def test_lk_forward_backward_consistency():
    prev, nxt = shifted_pair(240, 240, -4, 5, 11)
    rng = np.random.default_rng(0)
    pts = [TrackPoint(float(x), float(y), 1) for x, y in rng.uniform(40, 200, (30, 2))]
    fwd = lk_track_points(prev, nxt, pts)
    moved = [TrackPoint(p.x + f.dx, p.y + f.dy, 1) for p, f in zip(pts, fwd)]
    back = lk_track_points(nxt, prev, moved)
    for f, b in zip(fwd, back):
        if f.converged and b.converged:
            assert np.hypot(f.dx + b.dx, f.dy + b.dy) < 0.5


def test_lk_level_hand_off_doubles():
    prev, nxt = shifted_pair(400, 400, 5, -3, 9, m=4)
    trace = LKTrace()
    lk_track_points(prev, nxt, [TrackPoint(200, 200, 1), TrackPoint(150, 250, 1)], trace=trace)
    assert [lv.level for lv in trace.levels] == [4, 3, 2, 1, 0]
    assert np.all(trace.levels[0].guess == 0)
    for coarse, fine in zip(trace.levels, trace.levels[1:]):
        assert np.allclose(fine.guess, 2 * (coarse.guess + coarse.step), atol=1e-9, rtol=0)
        assert np.allclose(fine.positions, 2 * coarse.positions, atol=1e-9, rtol=0)


def test_lk_rejects_mismatched_pyramids():
    a, _ = shifted_pair(200, 200, 0, 0, 1, m=2)
    b, _ = shifted_pair(200, 200, 0, 0, 1, m=3)
    with pytest.raises(ValueError):
        lk_track_points(a, b, [TrackPoint(100, 100, 1)])
