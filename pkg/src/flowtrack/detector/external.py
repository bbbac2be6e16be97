"""Client for a detector running as a child process over stdin/stdout.

Request::

    DETECT <frame_idx> <w> <h>\\n
    <w*h*3 bytes of RGB, row-major>

Response::

    OK <n>\\n
    <class> <x> <y> <w> <h> <conf> <rle>\\n    (n times)

Coordinates are region-local. ``rle`` is ``<w>x<h>:<runs>`` anchored at
``(floor(x), floor(y))``, or ``-`` when the detector has no mask.
"""

from __future__ import annotations

import math
import os
import selectors
import shlex
import subprocess
import threading
import time

import numpy as np

from ..core import BoundingBox, Detection, ImageBuffer
from .base import DetectorClosed, DetectorUnavailable, ProtocolError
from .rle import RleError, parse_mask_rle

DEFAULT_TIMEOUT = 10.0


def encode_request(frame_index: int, region: ImageBuffer) -> bytes:
    data = region.data
    if region.channels == 1:
        data = np.repeat(data[:, :, None], 3, axis=2)
    header = f"DETECT {frame_index} {region.width} {region.height}\n".encode("ascii")
    return header + np.ascontiguousarray(data).tobytes()


def parse_header(line: str) -> int:
    parts = line.split()
    if len(parts) != 2 or parts[0] != "OK":
        raise ProtocolError("expected 'OK <n>'", line)
    try:
        n = int(parts[1])
    except ValueError:
        raise ProtocolError("record count is not an integer", line) from None
    if n < 0:
        raise ProtocolError("negative record count", line)
    return n


def parse_record(line: str) -> Detection:
    parts = line.split()
    if len(parts) != 7:
        raise ProtocolError("expected 7 fields 'class x y w h conf rle'", line)
    try:
        cls = int(parts[0])
        x, y, w, h, conf = (float(p) for p in parts[1:6])
    except ValueError:
        raise ProtocolError("non-numeric field", line) from None
    if not all(math.isfinite(v) for v in (x, y, w, h, conf)):
        raise ProtocolError("non-finite field", line)
    if not 0.0 <= conf <= 1.0:
        raise ProtocolError("confidence outside [0, 1]", line)
    if w <= 0 or h <= 0:
        raise ProtocolError("box size must be positive", line)
    mask = None
    if parts[6] != "-":
        try:
            mask = parse_mask_rle(parts[6], (math.floor(x), math.floor(y)))
        except RleError as exc:
            raise ProtocolError(f"bad mask ({exc})", line) from None
    try:
        return Detection(cls, BoundingBox(x, y, w, h), conf, mask)
    except ValueError as exc:
        raise ProtocolError(str(exc), line) from None


class DetectorConnection:
    """A running detector process. One request in flight at a time."""

    def __init__(self, command: str | list[str]):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.argv = argv
        try:
            self.proc = subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                         bufsize=0)
        except OSError as exc:
            raise DetectorClosed(f"cannot start detector {argv!r}: {exc}") from None
        self._out_fd = self.proc.stdout.fileno()
        self._in_fd = self.proc.stdin.fileno()
        os.set_blocking(self._out_fd, False)
        os.set_blocking(self._in_fd, False)
        self._buf = bytearray()
        self._lock = threading.Lock()

    def _send(self, payload: bytes, deadline: float) -> None:
        view = memoryview(payload)
        with selectors.DefaultSelector() as sel:
            sel.register(self._in_fd, selectors.EVENT_WRITE)
            while view:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise DetectorUnavailable("timed out sending request")
                if not sel.select(remaining):
                    continue
                try:
                    n = os.write(self._in_fd, view)
                except BlockingIOError:
                    continue
                except (BrokenPipeError, OSError):
                    raise DetectorClosed("detector closed its input") from None
                view = view[n:]

    def _readline(self, deadline: float) -> str:
        with selectors.DefaultSelector() as sel:
            sel.register(self._out_fd, selectors.EVENT_READ)
            while True:
                nl = self._buf.find(b"\n")
                if nl >= 0:
                    line = bytes(self._buf[:nl])
                    del self._buf[:nl + 1]
                    return line.decode("utf-8", errors="replace").rstrip("\r")
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise DetectorUnavailable("timed out waiting for detector response")
                if not sel.select(remaining):
                    continue
                try:
                    chunk = os.read(self._out_fd, 65536)
                except BlockingIOError:
                    continue
                if not chunk:
                    raise DetectorClosed("detector closed its output")
                self._buf.extend(chunk)

    def request(self, frame_index: int, region: ImageBuffer, timeout: float) -> list[Detection]:
        with self._lock:
            deadline = time.monotonic() + timeout
            self._send(encode_request(frame_index, region), deadline)
            n = parse_header(self._readline(deadline))
            return [parse_record(self._readline(deadline)) for _ in range(n)]

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()
        for f in (self.proc.stdout, self.proc.stdin):
            try:
                f.close()
            except OSError:
                pass


def external_detect(connection: DetectorConnection, region: ImageBuffer, timeout: float,
                    frame_index: int = 0) -> list[Detection]:
    return connection.request(frame_index, region, timeout)


class ExternalDetector:
    def __init__(self, command: str | list[str], timeout: float = DEFAULT_TIMEOUT):
        self.connection = DetectorConnection(command)
        self.timeout = timeout

    def detect(self, region, origin, frame_index):
        return external_detect(self.connection, region, self.timeout, frame_index)

    def close(self):
        self.connection.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
