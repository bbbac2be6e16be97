"""Ground-truth oracle detector with a replayable noise model."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..core import MASK_BOX_TOLERANCE, BoundingBox, Detection, ImageBuffer, InstanceMask, box_center
from .gt import GroundTruthStore

MASK64 = (1 << 64) - 1
FP_MIN_SIZE = 20
FP_MAX_SIZE = 120


def _mix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """splitmix64 stream; integer state only, so draws replay identically everywhere."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    @classmethod
    def keyed(cls, *keys: int) -> SplitMix64:
        s = 0
        for k in keys:
            s = _mix64(s ^ (k & MASK64))
        return cls(s)

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi]."""
        return lo + self.next_u64() % (hi - lo + 1)

    def gauss(self) -> float:
        u1 = 1.0 - self.uniform()
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def poisson(self, lam: float) -> int:
        if lam <= 0:
            return 0
        limit = math.exp(-lam)
        k, p = 0, self.uniform()
        while p > limit:
            k += 1
            p *= self.uniform()
        return k


@dataclass(frozen=True)
class OracleNoiseModel:
    miss_rate: float = 0.0
    false_positive_rate: float = 0.0
    box_jitter_sigma: float = 0.0
    confidence_range: tuple[float, float] = (0.95, 0.95)
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.confidence_range
        if not (0.0 <= lo <= hi <= 1.0):
            raise ValueError(f"confidence_range {self.confidence_range} must satisfy 0 <= lo <= hi <= 1")
        if not 0.0 <= self.miss_rate <= 1.0:
            raise ValueError("miss_rate must be in [0, 1]")
        if self.false_positive_rate < 0 or self.box_jitter_sigma < 0:
            raise ValueError("false_positive_rate and box_jitter_sigma must be >= 0")

    @classmethod
    def parse(cls, text: str) -> OracleNoiseModel:
        """Parse ``miss=0.2,fp=0.5,jitter=2,conf=0.5-0.95,seed=7`` (any subset)."""
        kw: dict = {}
        names = {"miss": "miss_rate", "fp": "false_positive_rate", "jitter": "box_jitter_sigma",
                 "conf": "confidence_range", "seed": "seed"}
        for item in filter(None, (s.strip() for s in text.split(","))):
            key, sep, value = item.partition("=")
            if not sep or key.strip() not in names:
                raise ValueError(f"bad noise setting {item!r}; keys are {sorted(names)}")
            key = names[key.strip()]
            if key == "confidence_range":
                lo, _, hi = value.partition("-")
                kw[key] = (float(lo), float(hi or lo))
            elif key == "seed":
                kw[key] = int(value)
            else:
                kw[key] = float(value)
        return cls(**kw)

    def describe(self) -> str:
        lo, hi = self.confidence_range
        return (f"miss={self.miss_rate:g},fp={self.false_positive_rate:g},"
                f"jitter={self.box_jitter_sigma:g},conf={lo:g}-{hi:g},seed={self.seed}")


def oracle_detect(store: GroundTruthStore, noise: OracleNoiseModel, frame_index: int,
                  window: BoundingBox) -> list[Detection]:
    """Detections for one window, in window-local coordinates.

    A ground-truth instance belongs to the window holding its box centre.
    The random stream depends only on (seed, frame, window origin).
    """
    instances = store.frame(frame_index)
    ox, oy = int(window.x), int(window.y)
    ww, wh = int(window.w), int(window.h)
    rng = SplitMix64.keyed(noise.seed, frame_index, (ox << 32) | oy)
    lo, hi = noise.confidence_range
    out = []
    for g in instances:
        cx, cy = box_center(g.box)
        if not window.contains_point(cx, cy):
            continue
        if rng.uniform() < noise.miss_rate:
            continue
        x1, y1, x2, y2 = g.box.x, g.box.y, g.box.x2, g.box.y2
        if noise.box_jitter_sigma > 0:
            s = noise.box_jitter_sigma
            x1 += rng.gauss() * s
            y1 += rng.gauss() * s
            x2 += rng.gauss() * s
            y2 += rng.gauss() * s
            x2 = max(x2, x1 + 1.0)
            y2 = max(y2, y1 + 1.0)
        conf = lo + (hi - lo) * rng.uniform()
        box = BoundingBox(x1 - ox, y1 - oy, x2 - x1, y2 - y1)
        mask = g.mask if g.mask is not None else InstanceMask.from_box(g.box)
        mask = mask.translated(-ox, -oy).cropped(
            math.ceil(box.x - MASK_BOX_TOLERANCE), math.ceil(box.y - MASK_BOX_TOLERANCE),
            math.floor(box.x2 + MASK_BOX_TOLERANCE), math.floor(box.y2 + MASK_BOX_TOLERANCE))
        out.append(Detection(g.class_id, box, conf, mask))

    classes = store.class_ids() or [0]
    for _ in range(rng.poisson(noise.false_positive_rate)):
        w = min(rng.randint(FP_MIN_SIZE, FP_MAX_SIZE), ww)
        h = min(rng.randint(FP_MIN_SIZE, FP_MAX_SIZE), wh)
        x = rng.randint(0, ww - w)
        y = rng.randint(0, wh - h)
        cls = classes[rng.randint(0, len(classes) - 1)]
        conf = lo + (hi - lo) * rng.uniform()
        box = BoundingBox(x, y, w, h)
        out.append(Detection(cls, box, conf, InstanceMask.from_box(box)))
    return out


class OracleDetector:
    def __init__(self, store: GroundTruthStore, noise: OracleNoiseModel | None = None):
        self.store = store
        self.noise = noise or OracleNoiseModel()

    def detect(self, region: ImageBuffer, origin: tuple[int, int],
               frame_index: int) -> list[Detection]:
        window = BoundingBox(origin[0], origin[1], region.width, region.height)
        return oracle_detect(self.store, self.noise, frame_index, window)
