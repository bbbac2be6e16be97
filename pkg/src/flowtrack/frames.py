"""Frame files: binary PPM (P6) read/write and lazy frame directories."""

from __future__ import annotations

from collections.abc import Sequence
from pathlib import Path

import numpy as np

from .core import ImageBuffer

FRAME_SUFFIXES = (".ppm", ".png")


class FrameFormatError(ValueError):
    pass


def _tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """First ``count`` whitespace-separated header tokens (skipping comments) and the body offset."""
    out = []
    i = 0
    n = len(data)
    while len(out) < count:
        while i < n and data[i:i + 1].isspace():
            i += 1
        if i < n and data[i:i + 1] == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not data[i:i + 1].isspace():
            i += 1
        if start == i:
            raise FrameFormatError("truncated PPM header")
        out.append(data[start:i])
    return out, i + 1


def decode_ppm(data: bytes) -> ImageBuffer:
    toks, offset = _tokens(data, 4)
    if toks[0] != b"P6":
        raise FrameFormatError(f"not a binary PPM (magic {toks[0]!r})")
    w, h, maxval = (int(t) for t in toks[1:])
    if maxval != 255:
        raise FrameFormatError(f"only 8-bit PPM supported, maxval {maxval}")
    body = data[offset:offset + w * h * 3]
    if len(body) != w * h * 3:
        raise FrameFormatError(f"PPM body has {len(body)} bytes, expected {w * h * 3}")
    return ImageBuffer(np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3).copy())


def encode_ppm(img: ImageBuffer) -> bytes:
    data = img.data if img.channels == 3 else np.repeat(img.data[:, :, None], 3, axis=2)
    return f"P6\n{img.width} {img.height}\n255\n".encode("ascii") + np.ascontiguousarray(data).tobytes()


def read_ppm(path: str | Path) -> ImageBuffer:
    path = Path(path)
    try:
        return decode_ppm(path.read_bytes())
    except FrameFormatError as exc:
        raise FrameFormatError(f"{path}: {exc}") from None


def write_ppm(path: str | Path, img: ImageBuffer) -> None:
    Path(path).write_bytes(encode_ppm(img))


def read_frame(path: str | Path) -> ImageBuffer:
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        return read_ppm(path)
    try:
        from PIL import Image
    except ImportError:  # pragma: no cover - Pillow is optional
        raise FrameFormatError(f"{path}: PNG frames need Pillow installed") from None
    with Image.open(path) as im:
        return ImageBuffer(np.asarray(im.convert("RGB"), dtype=np.uint8).copy())


class FrameDirectory(Sequence):
    """Sorted PPM/PNG files of a directory, decoded on access."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise FileNotFoundError(f"frame directory {self.directory} does not exist")
        self.paths = sorted(p for p in self.directory.iterdir()
                            if p.suffix.lower() in FRAME_SUFFIXES)

    def __len__(self):
        return len(self.paths)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        return read_frame(self.paths[i])
