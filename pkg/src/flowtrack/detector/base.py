"""Detector contract and the errors a detector may raise."""

from __future__ import annotations

import time
from typing import Protocol, Sequence

from ..core import Detection, ImageBuffer


class DetectorError(Exception):
    pass


class DetectorUnavailable(DetectorError):
    """The detector did not answer in time."""


class DetectorClosed(DetectorError):
    """The detector process went away."""


class ProtocolError(DetectorError):
    def __init__(self, message: str, line: str | None = None):
        super().__init__(message if line is None else f"{message}: {line!r}")
        self.line = line


class Detector(Protocol):
    def detect(self, region: ImageBuffer, origin: tuple[int, int],
               frame_index: int) -> list[Detection]:
        """Detections in region-local coordinates. Must not look at tracker state."""
        ...


class NullDetector:
    """Never detects anything."""

    def detect(self, region, origin, frame_index):
        return []


class FailingDetector:
    """Raises on every call; used to exercise degraded coasting."""

    def __init__(self, error: DetectorError | None = None):
        self.error = error or DetectorUnavailable("detector disabled")

    def detect(self, region, origin, frame_index):
        raise self.error


class FixedCostDetector:
    """Spends a fixed wall-clock time per window, then defers to ``inner`` (or detects nothing).

    Stands in for a network whose cost does not depend on image content.
    """

    def __init__(self, seconds_per_window: float, inner: Detector | None = None):
        self.seconds_per_window = seconds_per_window
        self.inner = inner

    def detect(self, region, origin, frame_index):
        deadline = time.perf_counter() + self.seconds_per_window
        dets: Sequence[Detection] = (self.inner.detect(region, origin, frame_index)
                                     if self.inner is not None else [])
        remaining = deadline - time.perf_counter()
        if remaining > 0:
            time.sleep(remaining)
        return list(dets)
