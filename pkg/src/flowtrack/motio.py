"""MOTChallenge-style CSV reading and writing (1-based frame numbers on disk)."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .core import BoundingBox


class MotFormatError(ValueError):
    def __init__(self, path: str, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


@dataclass(frozen=True)
class MotRow:
    frame: int  # 0-based
    id: int
    box: BoundingBox
    conf: float = 1.0
    class_id: int = 0
    visibility: float = 1.0


def parse_mot_text(text: str, source: str = "<mot>") -> list[MotRow]:
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) < 6:
            raise MotFormatError(source, lineno, f"expected at least 6 fields, got {len(parts)}")
        try:
            frame = int(float(parts[0]))
            tid = int(float(parts[1]))
            x, y, w, h = (float(p) for p in parts[2:6])
            conf = float(parts[6]) if len(parts) > 6 else 1.0
            cls = int(float(parts[7])) if len(parts) > 7 else 0
            vis = float(parts[8]) if len(parts) > 8 else 1.0
        except ValueError:
            raise MotFormatError(source, lineno, f"non-numeric field in {line!r}") from None
        if frame < 1:
            raise MotFormatError(source, lineno, f"frame numbers start at 1, got {frame}")
        if not (w > 0 and h > 0):
            raise MotFormatError(source, lineno, f"box size must be positive in {line!r}")
        rows.append(MotRow(frame - 1, tid, BoundingBox(x, y, w, h), conf, cls, vis))
    return rows


def read_mot_file(path: str | Path) -> list[MotRow]:
    path = Path(path)
    return parse_mot_text(path.read_text(encoding="utf-8"), source=str(path))


def format_result_row(frame: int, tid: int, box: BoundingBox, conf: float) -> str:
    return (f"{frame + 1},{tid},{box.x:.2f},{box.y:.2f},{box.w:.2f},{box.h:.2f},"
            f"{conf:.4f},-1,-1,-1\n")


def format_gt_row(frame: int, tid: int, box: BoundingBox, class_id: int,
                  visibility: float = 1.0) -> str:
    return (f"{frame + 1},{tid},{box.x:g},{box.y:g},{box.w:g},{box.h:g},1,"
            f"{class_id},{visibility:g}\n")


def group_by_frame(rows: Iterable[MotRow]) -> dict[int, list[MotRow]]:
    out: dict[int, list[MotRow]] = {}
    for r in rows:
        out.setdefault(r.frame, []).append(r)
    return out


class MotResultWriter:
    """Collects per-frame tracker rows and writes only tracklets that were ever confident.

    Rows a tracklet produced while still spurious are kept back and written
    once it is validated, so a confirmed track is reported from its birth.
    Tracklets that terminate unconfirmed never reach the file.
    """

    def __init__(self):
        self._rows: dict[int, list[tuple[int, BoundingBox, float]]] = {}
        self.confirmed: set[int] = set()

    def add(self, frame: int, rows: Iterable[tuple[int, BoundingBox, float, int]]) -> None:
        for tid, box, conf, label in rows:
            self._rows.setdefault(tid, []).append((frame, box, conf))
            if label == 1:
                self.confirmed.add(tid)

    def lines(self) -> list[str]:
        out = []
        for tid in self.confirmed:
            for frame, box, conf in self._rows[tid]:
                out.append((frame, tid, format_result_row(frame, tid, box, conf)))
        out.sort(key=lambda r: (r[0], r[1]))
        return [line for _, _, line in out]

    def write(self, path: str | Path) -> None:
        Path(path).write_text("".join(self.lines()), encoding="utf-8")
