"""Deterministic synthetic sequences: textured moving objects with exact ground truth."""

from __future__ import annotations

import json
import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import BoundingBox, ImageBuffer, InstanceMask, round_half_up
from .detector.gt import GroundTruthStore, GTInstance
from .frames import write_ppm

TEXTURES = ("noise", "checker", "stripes")
SHAPES = ("rect", "ellipse")
MAX_STEP = 8.0
MIN_SIZE = 8


class SceneError(ValueError):
    pass


@dataclass
class ObjectSpec:
    size: tuple[int, int]
    start: tuple[float, float]
    velocity: tuple[float, float] = (0.0, 0.0)
    texture: str = "noise"
    class_id: int = 0
    shape: str = "rect"
    # present for start_frame <= f < end_frame
    start_frame: int = 0
    end_frame: int | None = None


@dataclass
class SceneSpec:
    width: int
    height: int
    n_frames: int
    seed: int = 0
    objects: list[ObjectSpec] = field(default_factory=list)
    background: str = "noise"
    camera_drift: tuple[float, float] = (0.0, 0.0)

    def validate(self) -> None:
        if self.width < 1 or self.height < 1 or self.n_frames < 1:
            raise SceneError("frame size and count must be positive")
        if self.background not in TEXTURES + ("flat",):
            raise SceneError(f"unknown background texture {self.background!r}")
        for i, o in enumerate(self.objects):
            if min(o.size) < MIN_SIZE:
                raise SceneError(f"object {i}: size {o.size} below {MIN_SIZE} px")
            if o.texture not in TEXTURES:
                raise SceneError(f"object {i}: unknown texture {o.texture!r}")
            if o.shape not in SHAPES:
                raise SceneError(f"object {i}: unknown shape {o.shape!r}")
            step = math.hypot(o.velocity[0] + self.camera_drift[0],
                              o.velocity[1] + self.camera_drift[1])
            if step > MAX_STEP:
                raise SceneError(f"object {i}: moves {step:.2f} px/frame, limit {MAX_STEP}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> SceneSpec:
        try:
            objs = [ObjectSpec(**{**o, "size": tuple(o["size"]), "start": tuple(o["start"]),
                                  "velocity": tuple(o.get("velocity", (0.0, 0.0)))})
                    for o in d.get("objects", [])]
            spec = cls(width=int(d["width"]), height=int(d["height"]),
                       n_frames=int(d["n_frames"]), seed=int(d.get("seed", 0)), objects=objs,
                       background=d.get("background", "noise"),
                       camera_drift=tuple(d.get("camera_drift", (0.0, 0.0))))
        except (KeyError, TypeError, ValueError) as exc:
            raise SceneError(f"bad scene description: {exc}") from None
        spec.validate()
        return spec


def random_scene(width: int, height: int, n_frames: int, n_objects: int, seed: int = 0,
                 max_speed: float = 4.0, size_range: tuple[int, int] = (80, 120),
                 margin: int = 24) -> SceneSpec:
    """Objects in separate horizontal lanes so their paths never overlap and stay in frame."""
    rng = np.random.default_rng(seed)
    objects = []
    lane_h = height / max(n_objects, 1)
    for i in range(n_objects):
        w = int(rng.integers(size_range[0], size_range[1] + 1))
        h = int(min(rng.integers(size_range[0], size_range[1] + 1), lane_h - 2 * margin))
        if h < MIN_SIZE or w + 2 * margin > width:
            raise SceneError(f"{n_objects} objects of ~{size_range} px do not fit a {width}x{height} frame")
        lane_top = i * lane_h + margin
        lane_room = lane_h - 2 * margin - h
        span = max(1, n_frames - 1)
        vx_cap = min(max_speed, (width - 2 * margin - w) / span)
        vy_cap = min(max_speed / 4, lane_room / span)
        vx = float(rng.uniform(-vx_cap, vx_cap))
        vy = float(rng.uniform(-vy_cap, vy_cap))
        x0 = margin - min(0.0, vx) * span
        x1 = width - margin - w - max(0.0, vx) * span
        y0 = lane_top - min(0.0, vy) * span
        y1 = lane_top + lane_room - max(0.0, vy) * span
        start = (float(rng.uniform(x0, max(x0, x1))), float(rng.uniform(y0, max(y0, y1))))
        objects.append(ObjectSpec(size=(w, h), start=start, velocity=(vx, vy),
                                  texture=TEXTURES[i % len(TEXTURES)],
                                  shape="rect" if i % 2 == 0 else "ellipse"))
    spec = SceneSpec(width, height, n_frames, seed, objects)
    spec.validate()
    return spec


def _value_noise(rng: np.random.Generator, h: int, w: int, cell: int) -> np.ndarray:
    gh, gw = h // cell + 2, w // cell + 2
    grid = rng.random((gh, gw))
    ys = np.arange(h) / cell
    xs = np.arange(w) / cell
    y0 = ys.astype(int)
    x0 = xs.astype(int)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    a = grid[y0][:, x0]
    b = grid[y0][:, x0 + 1]
    c = grid[y0 + 1][:, x0]
    d = grid[y0 + 1][:, x0 + 1]
    return (a * (1 - fx) + b * fx) * (1 - fy) + (c * (1 - fx) + d * fx) * fy


def make_texture(kind: str, h: int, w: int, rng: np.random.Generator,
                 lo: float, hi: float) -> np.ndarray:
    if kind == "noise":
        t = 0.6 * _value_noise(rng, h, w, 6) + 0.4 * _value_noise(rng, h, w, 3)
    elif kind == "checker":
        cell = int(rng.integers(5, 9))
        yy, xx = np.mgrid[0:h, 0:w]
        t = (((yy // cell) + (xx // cell)) % 2).astype(float)
        t = 0.75 * t + 0.25 * _value_noise(rng, h, w, 4)
    elif kind == "stripes":
        yy, xx = np.mgrid[0:h, 0:w]
        period = float(rng.uniform(7, 12))
        angle = float(rng.uniform(0.3, 1.2))
        phase = (xx * math.cos(angle) + yy * math.sin(angle)) / period
        t = 0.6 * (0.5 + 0.5 * np.sin(2 * math.pi * phase)) + 0.4 * _value_noise(rng, h, w, 4)
    elif kind == "flat":
        t = np.full((h, w), 0.5)
    else:
        raise SceneError(f"unknown texture {kind!r}")
    t = (t - t.min()) / max(t.max() - t.min(), 1e-9)
    return np.round(lo + (hi - lo) * t).astype(np.uint8)


def _shape_bits(shape: str, w: int, h: int) -> np.ndarray:
    if shape == "rect":
        return np.ones((h, w), dtype=bool)
    yy, xx = np.mgrid[0:h, 0:w]
    cx, cy = (w - 1) / 2, (h - 1) / 2
    return ((xx - cx) / (w / 2)) ** 2 + ((yy - cy) / (h / 2)) ** 2 <= 1.0


@dataclass
class _Placed:
    bits: np.ndarray  # full-object shape bitmap
    texture: np.ndarray


class SyntheticFrames(Sequence):
    """Frames of a scene, rendered on access; identical bytes every time."""

    def __init__(self, spec: SceneSpec):
        spec.validate()
        self.spec = spec
        root = np.random.default_rng(spec.seed)
        bg_rng, *obj_rngs = [np.random.default_rng(s) for s in root.integers(0, 2**63, len(spec.objects) + 1)]
        self.background = make_texture(spec.background, spec.height, spec.width, bg_rng, 70, 140)
        self.placed = []
        for o, rng in zip(spec.objects, obj_rngs):
            w, h = o.size
            self.placed.append(_Placed(_shape_bits(o.shape, w, h),
                                       make_texture(o.texture, h, w, rng, 20, 235)))

    def __len__(self):
        return self.spec.n_frames

    def drift_offset(self, f: int) -> tuple[int, int]:
        dx, dy = self.spec.camera_drift
        return round_half_up(dx * f), round_half_up(dy * f)

    def object_origin(self, i: int, f: int) -> tuple[int, int]:
        o = self.spec.objects[i]
        dx, dy = self.spec.camera_drift
        return (round_half_up(o.start[0] + (o.velocity[0] + dx) * f),
                round_half_up(o.start[1] + (o.velocity[1] + dy) * f))

    def visible(self, i: int, f: int) -> tuple[int, int, np.ndarray] | None:
        """Clipped (x0, y0, bits) of object ``i`` in frame ``f``, or None when absent."""
        o = self.spec.objects[i]
        if f < o.start_frame or (o.end_frame is not None and f >= o.end_frame):
            return None
        W, H = self.spec.width, self.spec.height
        x, y = self.object_origin(i, f)
        w, h = o.size
        x0, y0, x1, y1 = max(0, x), max(0, y), min(W, x + w), min(H, y + h)
        if x1 <= x0 or y1 <= y0:
            return None
        bits = self.placed[i].bits[y0 - y:y1 - y, x0 - x:x1 - x]
        if not bits.any():
            return None
        return x0, y0, bits

    def render_gray(self, f: int) -> np.ndarray:
        if not 0 <= f < len(self):
            raise IndexError(f)
        ox, oy = self.drift_offset(f)
        img = np.roll(self.background, (oy, ox), axis=(0, 1)) if (ox or oy) else self.background.copy()
        for i, p in enumerate(self.placed):
            vis = self.visible(i, f)
            if vis is None:
                continue
            x0, y0, bits = vis
            x, y = self.object_origin(i, f)
            h, w = bits.shape
            tex = p.texture[y0 - y:y0 - y + h, x0 - x:x0 - x + w]
            region = img[y0:y0 + h, x0:x0 + w]
            region[bits] = tex[bits]
        return img

    def __getitem__(self, f):
        if isinstance(f, slice):
            return [self[i] for i in range(*f.indices(len(self)))]
        if f < 0:
            f += len(self)
        g = self.render_gray(f)
        return ImageBuffer(np.repeat(g[:, :, None], 3, axis=2))


def scene_ground_truth(frames: SyntheticFrames) -> GroundTruthStore:
    spec = frames.spec
    out = []
    for f in range(spec.n_frames):
        rows = []
        for i, o in enumerate(spec.objects):
            vis = frames.visible(i, f)
            if vis is None:
                continue
            x0, y0, bits = vis
            mask = InstanceMask((x0, y0), bits)
            ex0, ey0, ex1, ey1 = mask.extent()
            cx, cy = (ex0 + ex1) / 2, (ey0 + ey1) / 2
            if not (0 <= cx < spec.width and 0 <= cy < spec.height):
                continue
            if (ex0, ey0, ex1, ey1) != (x0, y0, x0 + bits.shape[1], y0 + bits.shape[0]):
                mask = mask.cropped(ex0, ey0, ex1, ey1)
            box = BoundingBox(ex0, ey0, ex1 - ex0, ey1 - ey0)
            rows.append(GTInstance(i + 1, o.class_id, box, mask))
        out.append(rows)
    return GroundTruthStore(out)


def render_sequence(spec: SceneSpec) -> tuple[SyntheticFrames, GroundTruthStore]:
    frames = SyntheticFrames(spec)
    return frames, scene_ground_truth(frames)


class SequenceWriteError(OSError):
    pass


def write_sequence(frames: Sequence[ImageBuffer], gt: GroundTruthStore, directory: str | Path,
                   seed: int | None = None) -> dict[str, str]:
    """Write ``%06d.ppm`` frames, ``gt.txt`` + ``masks/`` and ``manifest.txt``."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        first = None
        for i in range(len(frames)):
            img = frames[i]
            first = first or img
            write_ppm(directory / f"{i + 1:06d}.ppm", img)
        gt.save(directory / "gt.txt")
        manifest = {
            "width": str(first.width if first else 0),
            "height": str(first.height if first else 0),
            "frames": str(len(frames)),
            "seed": "" if seed is None else str(seed),
            "gt": "gt.txt",
        }
        (directory / "manifest.txt").write_text(
            "".join(f"{k} = {v}\n" for k, v in manifest.items()), encoding="utf-8")
    except OSError as exc:
        where = exc.filename or directory
        raise SequenceWriteError(f"cannot write sequence to {where}: {exc.strerror or exc}") from exc
    return manifest


def read_manifest(path: str | Path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line and "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out
