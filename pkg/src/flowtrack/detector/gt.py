"""Ground-truth store: MOT CSV boxes plus optional per-frame mask sidecars."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import BoundingBox, InstanceMask
from ..motio import MotFormatError, format_gt_row, read_mot_file
from .rle import RleError, encode_mask_rle, parse_mask_rle

MASK_DIR = "masks"


@dataclass(frozen=True)
class GTInstance:
    track_id: int
    class_id: int
    box: BoundingBox
    mask: InstanceMask | None = None


@dataclass
class GroundTruthStore:
    frames: list[list[GTInstance]] = field(default_factory=list)

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    def frame(self, index: int) -> list[GTInstance]:
        if not 0 <= index < len(self.frames):
            raise KeyError(f"frame {index} not in ground truth (0..{len(self.frames) - 1})")
        return self.frames[index]

    def class_ids(self) -> list[int]:
        return sorted({g.class_id for f in self.frames for g in f})

    def total_boxes(self) -> int:
        return sum(len(f) for f in self.frames)

    @classmethod
    def load(cls, path: str | Path, n_frames: int | None = None) -> GroundTruthStore:
        """Read ``gt.txt``; masks come from ``masks/%06d.txt`` beside it when present.

        Rows with a zero conf column are ignore-regions and skipped, as in
        MOTChallenge.
        """
        path = Path(path)
        rows = read_mot_file(path)
        last = max((r.frame for r in rows), default=-1)
        count = max(last + 1, n_frames or 0)
        frames: list[list[GTInstance]] = [[] for _ in range(count)]
        mask_dir = path.parent / MASK_DIR
        masks: dict[int, dict[int, str]] = {}
        if mask_dir.is_dir():
            for f in range(count):
                mpath = mask_dir / f"{f + 1:06d}.txt"
                if mpath.exists():
                    masks[f] = _read_mask_file(mpath)
        for r in rows:
            if r.conf == 0:
                continue
            mask = None
            rle = masks.get(r.frame, {}).get(r.id)
            if rle is not None:
                try:
                    mask = parse_mask_rle(rle, (math.floor(r.box.x), math.floor(r.box.y)))
                except RleError as exc:
                    raise MotFormatError(str(mask_dir), r.frame + 1, f"id {r.id}: {exc}") from None
            frames[r.frame].append(GTInstance(r.id, r.class_id, r.box, mask))
        for f in frames:
            f.sort(key=lambda g: g.track_id)
        return cls(frames)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        lines = []
        mask_dir = path.parent / MASK_DIR
        mask_dir.mkdir(parents=True, exist_ok=True)
        for f, instances in enumerate(self.frames):
            mlines = []
            for g in instances:
                lines.append(format_gt_row(f, g.track_id, g.box, g.class_id))
                mask = _anchored(g.mask, g.box) if g.mask is not None else None
                if mask is not None:
                    mlines.append(f"{g.track_id} {encode_mask_rle(mask)}\n")
            if mlines:
                (mask_dir / f"{f + 1:06d}.txt").write_text("".join(mlines), encoding="utf-8")
        path.write_text("".join(lines), encoding="utf-8")


def _anchored(mask: InstanceMask, box: BoundingBox) -> InstanceMask | None:
    """Re-express ``mask`` with its origin on the floored box corner, as the file format requires.

    Foreground left of or above that corner cannot be represented and is dropped.
    """
    ax, ay = math.floor(box.x), math.floor(box.y)
    x1, y1 = mask.extent()[2:]
    kept = mask.cropped(ax, ay, x1, y1)
    if kept is None:
        return None
    ox, oy = kept.origin
    bits = np.zeros((oy - ay + kept.height, ox - ax + kept.width), dtype=bool)
    bits[oy - ay:, ox - ax:] = kept.bits
    return InstanceMask((ax, ay), bits)


def _read_mask_file(path: Path) -> dict[int, str]:
    out = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise MotFormatError(str(path), lineno, f"expected 'id rle', got {line!r}")
        try:
            out[int(parts[0])] = parts[1]
        except ValueError:
            raise MotFormatError(str(path), lineno, f"bad id in {line!r}") from None
    return out
