"""HTTP facade over the mock backends.

Serves the same wire format the remote adapters speak, so a test can
point a RemoteSegmenter at this app (through ASGITransport or a real
socket) and expect byte-identical results to calling MockSegmenter
directly.  Every response echoes the model id from the request.
"""

from __future__ import annotations

from fastapi import Body, FastAPI

from .mock import mock_backend_set
from .wire import decode_image, decode_mask, encode_image, encode_mask


def build_service(backends=None):
    be = backends or mock_backend_set()
    app = FastAPI(title="scenesmith mock model service")

    @app.post("/segment")
    def segment(payload: dict = Body(...)):
        mask = be.segmenter.segment(
            decode_image(payload["image"]), seed=payload.get("seed", 0)
        )
        return {"mask": encode_mask(mask), "model": payload.get("model", "")}

    @app.post("/inpaint")
    def inpaint(payload: dict = Body(...)):
        out = be.inpainter.inpaint(
            decode_image(payload["image"]),
            decode_mask(payload["mask"]),
            decode_image(payload["background"]),
            prompt=payload.get("prompt", ""),
            seed=payload.get("seed", 0),
        )
        return {"image": encode_image(out), "model": payload.get("model", "")}

    @app.post("/complete")
    def complete(payload: dict = Body(...)):
        text = be.completer.complete_text(
            payload["system"], payload["prompt"], seed=payload.get("seed", 0)
        )
        return {"text": text, "model": payload.get("model", "")}

    @app.post("/caption")
    def caption(payload: dict = Body(...)):
        text = be.captioner.caption_image(
            decode_image(payload["image"]),
            instruction=payload.get("instruction", ""),
            seed=payload.get("seed", 0),
        )
        return {"text": text, "model": payload.get("model", "")}

    @app.post("/detect")
    def detect(payload: dict = Body(...)):
        boxes = be.detector.detect_objects(
            decode_image(payload["image"]),
            payload.get("queries", []),
            threshold=0.0,
            seed=payload.get("seed", 0),
        )
        return {
            "detections": [
                {
                    "label": b.label,
                    "x": b.x,
                    "y": b.y,
                    "w": b.w,
                    "h": b.h,
                    "confidence": b.confidence,
                }
                for b in boxes
            ],
            "model": payload.get("model", ""),
        }

    @app.post("/embed/image")
    def embed_image(payload: dict = Body(...)):
        vec = be.embedder.embed_image(decode_image(payload["image"]))
        return {
            "embedding": vec.values.tolist(),
            "normalized": vec.normalized,
            "model": payload.get("model", ""),
        }

    @app.post("/embed/text")
    def embed_text(payload: dict = Body(...)):
        vec = be.embedder.embed_text(payload["text"])
        return {
            "embedding": vec.values.tolist(),
            "normalized": vec.normalized,
            "model": payload.get("model", ""),
        }

    @app.post("/tokens")
    def tokens(payload: dict = Body(...)):
        return {
            "count": be.embedder.count_text_tokens(payload["text"]),
            "model": payload.get("model", ""),
        }

    return app
