"""Shared backend types.

Adapters are duck-typed; each capability is a class exposing the
capability method plus a ``version`` string that ends up in sample
provenance.  The dataclasses here are the values that cross the
adapter boundary in both directions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, PreconditionError


@dataclass
class BackendConfig:
    """How to reach one model backend."""

    name: str
    endpoint: str = ""
    timeout: float = 30.0
    retries: int = 2
    auth: str | None = None
    model: str = ""

    def __post_init__(self):
        if self.timeout <= 0:
            raise ConfigError(f"backend {self.name!r}: timeout must be positive")
        if self.retries < 0:
            raise ConfigError(f"backend {self.name!r}: retries must be >= 0")


@dataclass(frozen=True)
class DetectionBox:
    """One detector hit in pixel coordinates, x/y is the top-left corner."""

    label: str
    x: float
    y: float
    w: float
    h: float
    confidence: float

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise PreconditionError(
                f"detection box for {self.label!r} has non-positive size"
            )
        if not 0.0 <= self.confidence <= 1.0:
            raise PreconditionError(
                f"detection confidence {self.confidence} outside [0, 1]"
            )


def clamp_detection(label, x, y, w, h, confidence, width, height):
    """Clamp a raw detector box to image bounds.

    Confidence is clipped into [0, 1].  Returns None when nothing of
    the box survives inside the image.
    """
    x0 = min(max(x, 0.0), float(width))
    y0 = min(max(y, 0.0), float(height))
    x1 = min(max(x + w, 0.0), float(width))
    y1 = min(max(y + h, 0.0), float(height))
    if x1 - x0 <= 0 or y1 - y0 <= 0:
        return None
    return DetectionBox(
        label=label,
        x=x0,
        y=y0,
        w=x1 - x0,
        h=y1 - y0,
        confidence=min(max(confidence, 0.0), 1.0),
    )


@dataclass
class EmbeddingVector:
    """A dense embedding.  When ``normalized`` the norm must be 1 ± 1e-6."""

    values: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size == 0:
            raise PreconditionError("embedding must be a non-empty 1-d vector")
        if self.normalized:
            norm = float(np.linalg.norm(self.values))
            if abs(norm - 1.0) > 1e-6:
                raise PreconditionError(
                    f"embedding flagged normalized but has norm {norm}"
                )


@dataclass
class BackendSet:
    """The six capabilities the pipeline consumes, as one bundle."""

    segmenter: object
    inpainter: object
    completer: object
    captioner: object
    detector: object
    embedder: object

    def versions(self):
        return {
            "segmenter": self.segmenter.version,
            "inpainter": self.inpainter.version,
            "completer": self.completer.version,
            "captioner": self.captioner.version,
            "detector": self.detector.version,
            "embedder": self.embedder.version,
        }
