"""Shared value types, box geometry and pipeline configuration."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np


def round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """8-bit raster, either (h, w) luma or (h, w, 3) RGB, stored row-major."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.dtype != np.uint8:
            raise TypeError(f"ImageBuffer needs uint8 samples, got {self.data.dtype}")
        if self.data.ndim == 2:
            pass
        elif self.data.ndim == 3 and self.data.shape[2] == 3:
            pass
        else:
            raise ValueError(f"unsupported image shape {self.data.shape}")
        if self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ValueError("image dimensions must be >= 1")

    @classmethod
    def blank(cls, width: int, height: int, channels: int = 1, value: int = 0) -> ImageBuffer:
        shape = (height, width) if channels == 1 else (height, width, channels)
        return cls(np.full(shape, value, dtype=np.uint8))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else 3

    def pixel(self, x: int, y: int):
        if not (0 <= x < self.width and 0 <= y < self.height):
            raise IndexError(f"pixel ({x}, {y}) outside {self.width}x{self.height} image")
        v = self.data[y, x]
        return int(v) if self.channels == 1 else tuple(int(c) for c in v)

    def crop(self, x: int, y: int, w: int, h: int) -> ImageBuffer:
        if x < 0 or y < 0 or x + w > self.width or y + h > self.height or w < 1 or h < 1:
            raise IndexError(f"crop ({x}, {y}, {w}, {h}) outside {self.width}x{self.height} image")
        return ImageBuffer(self.data[y:y + h, x:x + w])

    def __eq__(self, other):
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box, real-valued (x, y) top-left corner plus size."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box needs positive size, got w={self.w} h={self.h}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    def intersects(self, other: BoundingBox) -> bool:
        return (min(self.x2, other.x2) > max(self.x, other.x)
                and min(self.y2, other.y2) > max(self.y, other.y))

    def contains_point(self, x: float, y: float) -> bool:
        # half-open so a point on a shared edge belongs to exactly one tile
        return self.x <= x < self.x2 and self.y <= y < self.y2


def box_center(box: BoundingBox) -> tuple[float, float]:
    return (box.x + box.w / 2, box.y + box.h / 2)


def translate_box(box: BoundingBox, d: tuple[float, float]) -> BoundingBox:
    return BoundingBox(box.x + d[0], box.y + d[1], box.w, box.h)


class InstanceMask:
    """Dense foreground bitmap anchored at an integer frame origin."""

    __slots__ = ("origin", "bits", "_extent")

    def __init__(self, origin: tuple[int, int], bits: np.ndarray):
        bits = np.asarray(bits, dtype=bool)
        if bits.ndim != 2 or bits.size == 0:
            raise ValueError("mask bits must be a non-empty 2-D array")
        if not bits.any():
            raise ValueError("mask has no foreground pixels")
        self.origin = (int(origin[0]), int(origin[1]))
        self.bits = bits
        self._extent = None

    @classmethod
    def from_box(cls, box: BoundingBox) -> InstanceMask:
        x0, y0 = round_half_up(box.x), round_half_up(box.y)
        x1, y1 = round_half_up(box.x2), round_half_up(box.y2)
        w, h = max(1, x1 - x0), max(1, y1 - y0)
        return cls((x0, y0), np.ones((h, w), dtype=bool))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    def extent(self) -> tuple[int, int, int, int]:
        """Tight (x0, y0, x1, y1) of the foreground, exclusive upper bounds."""
        if self._extent is None:
            rows = np.flatnonzero(self.bits.any(axis=1))
            cols = np.flatnonzero(self.bits.any(axis=0))
            ox, oy = self.origin
            self._extent = (ox + int(cols[0]), oy + int(rows[0]),
                            ox + int(cols[-1]) + 1, oy + int(rows[-1]) + 1)
        return self._extent

    def centroid(self) -> tuple[float, float]:
        ys, xs = np.nonzero(self.bits)
        return (self.origin[0] + float(xs.mean()), self.origin[1] + float(ys.mean()))

    def translated(self, dx: int, dy: int) -> InstanceMask:
        return InstanceMask((self.origin[0] + dx, self.origin[1] + dy), self.bits)

    def cropped(self, x0: int, y0: int, x1: int, y1: int) -> InstanceMask | None:
        """Intersection with [x0, x1) x [y0, y1); None when nothing survives."""
        ox, oy = self.origin
        cx0, cy0 = max(x0, ox), max(y0, oy)
        cx1, cy1 = min(x1, ox + self.width), min(y1, oy + self.height)
        if cx1 <= cx0 or cy1 <= cy0:
            return None
        sub = self.bits[cy0 - oy:cy1 - oy, cx0 - ox:cx1 - ox]
        if not sub.any():
            return None
        return InstanceMask((cx0, cy0), sub)

    def __eq__(self, other):
        if not isinstance(other, InstanceMask):
            return NotImplemented
        return self.origin == other.origin and np.array_equal(self.bits, other.bits)

    def __repr__(self):
        return f"InstanceMask(origin={self.origin}, size={self.width}x{self.height}, fg={self.count})"


def mask_contains(mask: InstanceMask, p: tuple[float, float]) -> bool:
    col = round_half_up(p[0]) - mask.origin[0]
    row = round_half_up(p[1]) - mask.origin[1]
    if 0 <= row < mask.height and 0 <= col < mask.width:
        return bool(mask.bits[row, col])
    return False


MASK_BOX_TOLERANCE = 2.0


@dataclass(frozen=True)
class Detection:
    class_id: int
    box: BoundingBox
    confidence: float
    mask: InstanceMask | None = None

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if self.mask is not None:
            x0, y0, x1, y1 = self.mask.extent()
            t = MASK_BOX_TOLERANCE
            b = self.box
            if x0 < b.x - t or y0 < b.y - t or x1 > b.x2 + t or y1 > b.y2 + t:
                raise ValueError(f"mask extent {(x0, y0, x1, y1)} exceeds box {b}")

    def translated(self, dx: int, dy: int) -> Detection:
        mask = self.mask.translated(dx, dy) if self.mask is not None else None
        return Detection(self.class_id, translate_box(self.box, (dx, dy)), self.confidence, mask)


@dataclass(frozen=True)
class TrackPoint:
    x: float
    y: float
    id: int
    alive: bool = True

    @property
    def pos(self) -> tuple[float, float]:
        return (self.x, self.y)


class TrackState(enum.IntEnum):
    SPURIOUS = 0
    CONFIDENT = 1
    TERMINATED = 2


@dataclass
class Tracklet:
    id: int
    class_id: int
    box: BoundingBox
    points: list[TrackPoint]
    confidence: float
    state: TrackState = TrackState.SPURIOUS
    last_redetect_frame: int = 0
    birth_frame: int = 0
    # set when optical flow lost every point; forces a probe of its window
    needs_redetect: bool = False

    def __post_init__(self):
        for p in self.points:
            if p.id != self.id:
                raise ValueError(f"point id {p.id} does not match tracklet {self.id}")

    @property
    def alive_points(self) -> list[TrackPoint]:
        return [p for p in self.points if p.alive]

    @property
    def label(self) -> int:
        return 1 if self.state == TrackState.CONFIDENT else 0


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    window_size: int = 640
    window_overlap_ratio: float = 0.2
    points_per_instance: int = 5
    pyramid_levels: int = 5
    windows_per_frame: int = 1
    edge_rate_boost: int = 4
    instance_rate_boost: int = 4
    poa_threshold: float = 0.6
    iou_gate: float = 0.1
    conf_required_per_detection: float = 0.3
    conf_validate_threshold: float = 0.9
    conf_terminate_threshold: float = -0.6
    lk_window_radius: int = 10
    lk_max_iterations: int = 30
    lk_epsilon: float = 0.01
    harris_k: float = 0.04
    mask_containment_fraction: float = 0.6

    def __post_init__(self):
        self.validate()

    @property
    def c_min(self) -> float:
        return self.conf_required_per_detection

    def validate(self) -> None:
        checks = [
            (self.window_size >= 1, "window_size must be >= 1"),
            (0.0 <= self.window_overlap_ratio < 1.0, "window_overlap_ratio must be in [0, 1)"),
            (self.points_per_instance >= 1, "points_per_instance must be >= 1"),
            (self.pyramid_levels >= 0, "pyramid_levels must be >= 0"),
            (self.windows_per_frame >= 1, "windows_per_frame must be >= 1"),
            (self.edge_rate_boost >= 1, "edge_rate_boost must be >= 1"),
            (self.instance_rate_boost >= 1, "instance_rate_boost must be >= 1"),
            (0.0 <= self.poa_threshold <= 1.0, "poa_threshold must be in [0, 1]"),
            (0.0 <= self.iou_gate <= 1.0, "iou_gate must be in [0, 1]"),
            (0.0 <= self.conf_required_per_detection <= 1.0,
             "conf_required_per_detection must be in [0, 1]"),
            (self.conf_terminate_threshold < 0 < self.conf_validate_threshold,
             "need conf_terminate_threshold < 0 < conf_validate_threshold"),
            (self.lk_window_radius >= 1, "lk_window_radius must be >= 1"),
            (self.lk_max_iterations >= 1, "lk_max_iterations must be >= 1"),
            (self.lk_epsilon > 0, "lk_epsilon must be > 0"),
            (self.harris_k > 0, "harris_k must be > 0"),
            (0.0 <= self.mask_containment_fraction <= 1.0,
             "mask_containment_fraction must be in [0, 1]"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def field_types(cls) -> dict[str, type]:
        return {f.name: type(f.default) for f in fields(cls)}

    def with_overrides(self, overrides: dict[str, object]) -> PipelineConfig:
        values = {k: getattr(self, k) for k in self.keys()}
        types = self.field_types()
        for key, raw in overrides.items():
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = _coerce(key, raw, types[key])
        return PipelineConfig(**values)

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> PipelineConfig:
        overrides: dict[str, object] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in cls.field_types():
                raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
            overrides[key] = value
        try:
            return cls().with_overrides(overrides)
        except ConfigError as exc:
            raise ConfigError(f"{source}: {exc}") from None

    @classmethod
    def from_file(cls, path: str | Path) -> PipelineConfig:
        path = Path(path)
        return cls.from_text(path.read_text(encoding="utf-8"), source=str(path))

    def to_text(self) -> str:
        return "".join(f"{k} = {getattr(self, k)!r}\n" for k in self.keys())


def _coerce(key: str, raw: object, typ: type):
    if isinstance(raw, typ) and not isinstance(raw, bool):
        return raw
    try:
        if typ is int:
            if isinstance(raw, float) and not raw.is_integer():
                raise ValueError
            return int(str(raw).strip()) if not isinstance(raw, float) else int(raw)
        return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot parse {raw!r} as {typ.__name__}") from None


@dataclass
class IdAllocator:
    next_id: int = 1

    def allocate(self) -> int:
        i = self.next_id
        self.next_id += 1
        return i
