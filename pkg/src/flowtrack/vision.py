"""Grayscale conversion, image pyramids, Harris corners and pyramidal Lucas-Kanade."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import BoundingBox, ImageBuffer, InstanceMask, TrackPoint, mask_contains

BINOMIAL_5 = (1, 4, 6, 4, 1)
MIN_EIGEN_THRESHOLD = 1e-4
MIN_POINT_SEPARATION = 3.0


def to_grayscale(img: ImageBuffer) -> ImageBuffer:
    if img.channels != 3:
        raise ValueError(f"to_grayscale expects 3 channels, got {img.channels}")
    d = img.data
    # integer form of round(0.299 R + 0.587 G + 0.114 B)
    luma = d[..., 0].astype(np.uint32) * 299
    luma += d[..., 1].astype(np.uint32) * 587
    luma += d[..., 2].astype(np.uint32) * 114
    luma += 500
    luma //= 1000
    return ImageBuffer(luma.astype(np.uint8))


@dataclass
class Pyramid:
    levels: list[ImageBuffer]

    @property
    def m(self) -> int:
        return len(self.levels) - 1

    @property
    def width(self) -> int:
        return self.levels[0].width

    @property
    def height(self) -> int:
        return self.levels[0].height


def pyramid_dims(width: int, height: int, m: int) -> list[tuple[int, int]]:
    dims = [(width, height)]
    for _ in range(m):
        w, h = dims[-1]
        dims.append(((w + 1) // 2, (h + 1) // 2))
    return dims


def _filter_decimate(a: np.ndarray, axis: int) -> np.ndarray:
    """Binomial [1 4 6 4 1] along one axis evaluated only at even samples (unnormalized)."""
    n = a.shape[axis]
    out_n = (n + 1) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (2, 2)
    padded = np.pad(a, pad, mode="reflect" if n >= 3 else "edge")
    acc = None
    for k, wk in enumerate(BINOMIAL_5):
        sl = [slice(None), slice(None)]
        sl[axis] = slice(k, k + 2 * out_n - 1, 2)
        term = padded[tuple(sl)] * wk
        acc = term if acc is None else acc + term
    return acc


def _reduce(level: np.ndarray) -> np.ndarray:
    # weights sum to 16 per pass, so 255 * 256 + 128 still fits in uint16
    a = level.astype(np.uint16)
    a = _filter_decimate(a, axis=1)
    a = _filter_decimate(a, axis=0)
    a += 128
    a >>= 8
    return a.astype(np.uint8)


def build_pyramid(img: ImageBuffer, m: int, window_radius: int = 10) -> Pyramid:
    """Level 0 is the input; each further level is smoothed and halved (ceil)."""
    if img.channels != 1:
        raise ValueError("build_pyramid expects a single-channel image")
    if m < 0:
        raise ValueError("pyramid levels must be >= 0")
    need = 2 * window_radius + 1
    if m > 0 and min(img.width, img.height) / 2 ** m < need:
        raise ValueError(
            f"{img.width}x{img.height} image too small for {m} pyramid levels "
            f"(coarsest side must be >= {need} px)")
    levels = [img]
    for _ in range(m):
        levels.append(ImageBuffer(_reduce(levels[-1].data)))
    return Pyramid(levels)


def _region_bounds(img: ImageBuffer, region: BoundingBox) -> tuple[int, int, int, int]:
    x0, y0 = int(math.floor(region.x)), int(math.floor(region.y))
    x1, y1 = int(math.ceil(region.x2)), int(math.ceil(region.y2))
    if x0 < 0 or y0 < 0 or x1 > img.width or y1 > img.height:
        raise ValueError(f"region {region} outside {img.width}x{img.height} image")
    return x0, y0, x1, y1


def harris_response(img: ImageBuffer, region: BoundingBox, k: float = 0.04) -> np.ndarray:
    """Harris score det(M) - k trace(M)^2 for every pixel of ``region``.

    M sums Sobel gradient products over a 3x3 neighbourhood. Pixels outside
    the image are replicated from the border. The returned array is indexed
    ``[row, col]`` relative to the region's integer top-left corner.
    """
    if img.channels != 1:
        raise ValueError("harris_response expects a single-channel image")
    x0, y0, x1, y1 = _region_bounds(img, region)
    m = 2
    sx0, sy0 = max(0, x0 - m), max(0, y0 - m)
    sx1, sy1 = min(img.width, x1 + m), min(img.height, y1 + m)
    patch = img.data[sy0:sy1, sx0:sx1].astype(np.float64)
    patch = np.pad(patch, ((sy0 - (y0 - m), (y1 + m) - sy1), (sx0 - (x0 - m), (x1 + m) - sx1)),
                   mode="edge")

    # Sobel on the padded patch loses one pixel per side
    p = patch
    gx = ((p[:-2, 2:] + 2 * p[1:-1, 2:] + p[2:, 2:])
          - (p[:-2, :-2] + 2 * p[1:-1, :-2] + p[2:, :-2]))
    gy = ((p[2:, :-2] + 2 * p[2:, 1:-1] + p[2:, 2:])
          - (p[:-2, :-2] + 2 * p[:-2, 1:-1] + p[:-2, 2:]))

    def box3(a):
        return (a[:-2, :-2] + a[:-2, 1:-1] + a[:-2, 2:]
                + a[1:-1, :-2] + a[1:-1, 1:-1] + a[1:-1, 2:]
                + a[2:, :-2] + a[2:, 1:-1] + a[2:, 2:])

    sxx, syy, sxy = box3(gx * gx), box3(gy * gy), box3(gx * gy)
    trace = sxx + syy
    return sxx * syy - sxy * sxy - k * trace * trace


def _interior(bits: np.ndarray) -> np.ndarray:
    padded = np.pad(bits, 1, constant_values=False)
    out = bits.copy()
    h, w = bits.shape
    for dy in (0, 1, 2):
        for dx in (0, 1, 2):
            out &= padded[dy:dy + h, dx:dx + w]
    return out


def _centroid_point(mask: InstanceMask, width: int, height: int) -> tuple[float, float]:
    cx, cy = mask.centroid()
    ys, xs = np.nonzero(mask.bits)
    xs = xs + mask.origin[0]
    ys = ys + mask.origin[1]
    inside = (xs >= 0) & (xs < width) & (ys >= 0) & (ys < height)
    if inside.any():
        xs, ys = xs[inside], ys[inside]
    i = int(np.argmin((xs - cx) ** 2 + (ys - cy) ** 2))
    return float(xs[i]), float(ys[i])


def select_track_points(img: ImageBuffer, mask: InstanceMask, n: int, track_id: int,
                        k: float = 0.04,
                        min_separation: float = MIN_POINT_SEPARATION) -> list[TrackPoint]:
    """Pick up to ``n`` well-separated Harris corners inside ``mask``.

    Candidates are foreground pixels away from the mask outline with a
    positive response, taken greedily by descending score. A mask with no
    corner at all yields the single foreground pixel nearest its centroid.
    """
    ox, oy = mask.origin
    cx0, cy0 = max(0, ox), max(0, oy)
    cx1, cy1 = min(img.width, ox + mask.width), min(img.height, oy + mask.height)
    chosen: list[tuple[float, float]] = []
    if cx1 > cx0 and cy1 > cy0:
        bits = mask.bits[cy0 - oy:cy1 - oy, cx0 - ox:cx1 - ox]
        interior = _interior(bits)
        if not interior.any():
            interior = bits
        resp = harris_response(img, BoundingBox(cx0, cy0, cx1 - cx0, cy1 - cy0), k)
        cand = interior & (resp > 0)
        if cand.any():
            rows, cols = np.nonzero(cand)
            scores = resp[rows, cols]
            order = np.argsort(-scores, kind="stable")
            min_d2 = min_separation ** 2
            for i in order:
                x, y = float(cols[i] + cx0), float(rows[i] + cy0)
                if all((x - px) ** 2 + (y - py) ** 2 >= min_d2 for px, py in chosen):
                    chosen.append((x, y))
                    if len(chosen) == n:
                        break
    if not chosen:
        chosen.append(_centroid_point(mask, img.width, img.height))
    pts = [TrackPoint(x, y, track_id, True) for x, y in chosen]
    assert all(mask_contains(mask, p.pos) for p in pts)
    return pts


@dataclass(frozen=True)
class FlowResult:
    dx: float
    dy: float
    converged: bool
    residual: float

    @property
    def u(self) -> tuple[float, float]:
        return (self.dx, self.dy)


@dataclass
class LevelTrace:
    level: int
    positions: np.ndarray  # point locations scaled to this level
    guess: np.ndarray  # displacement carried in from the coarser level
    step: np.ndarray  # displacement solved at this level


@dataclass
class LKTrace:
    levels: list[LevelTrace] = field(default_factory=list)


def _bilinear(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    h, w = img.shape
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    fx = xs - x0
    fy = ys - y0
    x0 = x0.astype(np.intp)
    y0 = y0.astype(np.intp)
    x1 = np.clip(x0 + 1, 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    x0 = np.clip(x0, 0, w - 1)
    y0 = np.clip(y0, 0, h - 1)
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def lk_track_points(prev: Pyramid, nxt: Pyramid, points: Sequence[TrackPoint], *,
                    window_radius: int = 10, max_iterations: int = 30,
                    epsilon: float = 0.01, trace: LKTrace | None = None) -> list[FlowResult]:
    """Track ``points`` from ``prev`` to ``nxt`` coarse-to-fine.

    The search starts with a zero guess at the coarsest level. Whatever was
    solved at level L is doubled before refinement continues at level L-1.
    """
    if prev.m != nxt.m or (prev.width, prev.height) != (nxt.width, nxt.height):
        raise ValueError("pyramid mismatch: levels or base dimensions differ")
    n = len(points)
    if n == 0:
        return []
    r = window_radius
    pts = np.array([[p.x, p.y] for p in points], dtype=np.float64)
    ext = np.arange(-r - 1, r + 2, dtype=np.float64)
    ex_x, ex_y = np.meshgrid(ext, ext)
    win = np.arange(-r, r + 1, dtype=np.float64)
    wx, wy = np.meshgrid(win, win)
    area = float(win.size ** 2)

    guess = np.zeros((n, 2))
    ok = np.ones(n, dtype=bool)
    residual = np.full(n, np.inf)
    for level in range(prev.m, -1, -1):
        I = prev.levels[level].data
        J = nxt.levels[level].data
        pl = pts / 2.0 ** level
        patch = _bilinear(I, pl[:, 0, None, None] + ex_x, pl[:, 1, None, None] + ex_y)
        ix = (patch[:, 1:-1, 2:] - patch[:, 1:-1, :-2]) * 0.5
        iy = (patch[:, 2:, 1:-1] - patch[:, :-2, 1:-1]) * 0.5
        iw = patch[:, 1:-1, 1:-1]
        gxx = (ix * ix).sum(axis=(1, 2), dtype=np.float64)
        gyy = (iy * iy).sum(axis=(1, 2), dtype=np.float64)
        gxy = (ix * iy).sum(axis=(1, 2), dtype=np.float64)
        min_eig = (gxx + gyy - np.sqrt((gxx - gyy) ** 2 + 4 * gxy ** 2)) / 2 / area
        solvable = min_eig >= MIN_EIGEN_THRESHOLD
        det = gxx * gyy - gxy * gxy

        step = np.zeros((n, 2))
        active = solvable.copy()
        for _ in range(max_iterations):
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            q = pl[idx] + guess[idx] + step[idx]
            jw = _bilinear(J, q[:, 0, None, None] + wx, q[:, 1, None, None] + wy)
            diff = iw[idx] - jw
            bx = (diff * ix[idx]).sum(axis=(1, 2), dtype=np.float64)
            by = (diff * iy[idx]).sum(axis=(1, 2), dtype=np.float64)
            d = det[idx]
            eta_x = (gyy[idx] * bx - gxy[idx] * by) / d
            eta_y = (gxx[idx] * by - gxy[idx] * bx) / d
            step[idx, 0] += eta_x
            step[idx, 1] += eta_y
            done = np.hypot(eta_x, eta_y) < epsilon
            active[idx[done]] = False

        if trace is not None:
            trace.levels.append(LevelTrace(level, pl.copy(), guess.copy(), step.copy()))
        if level > 0:
            guess = 2.0 * (guess + step)
        else:
            guess = guess + step
            ok &= solvable
            q = pl + guess
            jw = _bilinear(J, q[:, 0, None, None] + wx, q[:, 1, None, None] + wy)
            residual = np.abs(iw - jw).mean(axis=(1, 2))

    w, h = prev.width, prev.height
    new = pts + guess
    for a in (pts, new):
        ok &= (a[:, 0] >= r) & (a[:, 0] <= w - 1 - r) & (a[:, 1] >= r) & (a[:, 1] <= h - 1 - r)
    ok &= np.isfinite(guess).all(axis=1)
    return [FlowResult(float(guess[i, 0]), float(guess[i, 1]), bool(ok[i]),
                       float(residual[i]) if ok[i] else float("inf")) for i in range(n)]
