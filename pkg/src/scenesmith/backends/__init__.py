"""Model backend adapters.

Six capabilities sit behind one adapter contract each: segmentation,
inpainting, text completion, image captioning, open-vocabulary
detection, and embedding.  ``mock`` provides deterministic in-process
implementations; ``remote`` speaks JSON over HTTP to a real model
server; ``service`` wraps the mocks in that same HTTP surface so the
two paths stay interchangeable.
"""

from .base import (
    BackendConfig,
    DetectionBox,
    EmbeddingVector,
    clamp_detection,
)
from .mock import (
    MockCaptioner,
    MockDetector,
    MockEmbedder,
    MockInpainter,
    MockSegmenter,
    MockTextCompleter,
    mock_backend_set,
)
from .remote import (
    RemoteCaptioner,
    RemoteDetector,
    RemoteEmbedder,
    RemoteInpainter,
    RemoteSegmenter,
    RemoteTextCompleter,
    remote_backend_set,
)
from .service import build_service

__all__ = [
    "BackendConfig",
    "DetectionBox",
    "EmbeddingVector",
    "clamp_detection",
    "MockSegmenter",
    "MockInpainter",
    "MockTextCompleter",
    "MockCaptioner",
    "MockDetector",
    "MockEmbedder",
    "mock_backend_set",
    "RemoteSegmenter",
    "RemoteInpainter",
    "RemoteTextCompleter",
    "RemoteCaptioner",
    "RemoteDetector",
    "RemoteEmbedder",
    "remote_backend_set",
    "build_service",
]
