"""Run-length text encoding of instance masks: ``<w>x<h>:<bg>,<fg>,<bg>,...``."""

from __future__ import annotations

import re

import numpy as np

from ..core import InstanceMask

_HEADER = re.compile(r"^(\d+)x(\d+):(.*)$")


class RleError(ValueError):
    pass


def decode_rle(text: str) -> np.ndarray:
    """Decode to a boolean (h, w) array; runs alternate background/foreground, row-major."""
    m = _HEADER.match(text.strip())
    if m is None:
        raise RleError(f"malformed mask run-length string {text!r}")
    w, h = int(m.group(1)), int(m.group(2))
    if w < 1 or h < 1:
        raise RleError(f"mask extent must be positive, got {w}x{h}")
    body = m.group(3).strip()
    try:
        runs = [int(tok) for tok in body.split(",")] if body else []
    except ValueError:
        raise RleError(f"non-integer run in {text!r}") from None
    if any(r < 0 for r in runs):
        raise RleError(f"negative run in {text!r}")
    total = sum(runs)
    if total != w * h:
        raise RleError(f"run sum {total} != {w}x{h} = {w * h}")
    flat = np.zeros(w * h, dtype=bool)
    pos = 0
    for i, r in enumerate(runs):
        if i % 2 == 1:
            flat[pos:pos + r] = True
        pos += r
    return flat.reshape(h, w)


def parse_mask_rle(text: str, origin: tuple[int, int] = (0, 0)) -> InstanceMask:
    bits = decode_rle(text)
    if not bits.any():
        raise RleError(f"mask {text!r} has no foreground")
    return InstanceMask(origin, bits)


def encode_rle(bits: np.ndarray) -> str:
    """Canonical encoding: leading background run always present, no trailing empty run."""
    bits = np.asarray(bits, dtype=bool)
    h, w = bits.shape
    flat = bits.ravel()
    edges = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    runs = np.diff(np.concatenate(([0], edges, [flat.size]))).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return f"{w}x{h}:" + ",".join(str(r) for r in runs)


def encode_mask_rle(mask: InstanceMask) -> str:
    return encode_rle(mask.bits)
