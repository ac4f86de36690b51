# pipeline/frames.py
"""Message payloads flowing between pipeline nodes."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class RgbFrame:
    image: np.ndarray = field(repr=False)
    stamp: int
    # Degradations applied on the way; logging only, never read by the monitor.
    tags: tuple[str, ...] = ()

    def log_detail(self) -> dict:
        return {"tags": list(self.tags)} if self.tags else {}


@dataclass(frozen=True)
class DepthFrame:
    image: np.ndarray = field(repr=False)
    stamp: int
    tags: tuple[str, ...] = ()

    def log_detail(self) -> dict:
        return {"tags": list(self.tags)} if self.tags else {}


@dataclass(frozen=True)
class FusedFrame:
    rgb: Optional[np.ndarray] = field(repr=False)
    depth: Optional[np.ndarray] = field(repr=False)
    modality: str
    stamp: int
    calibration_offset: tuple[int, int] = (0, 0)

    def log_detail(self) -> dict:
        return {"modality": self.modality, "offset": list(self.calibration_offset)}
