"""HTTP adapters speaking the JSON-over-POST wire format.

A transport error or 5xx answer is retried until the configured budget
runs out (retries + 1 attempts total), then surfaces as
BackendUnavailable.  Any other bad answer is a ProtocolError right
away; retrying a malformed response would just get it again.
"""

from __future__ import annotations

import httpx

from ..errors import BackendUnavailable, EmptyCompletion, ProtocolError
from .base import BackendSet, EmbeddingVector, clamp_detection
from .wire import decode_image, decode_mask, encode_image, encode_mask


class _HttpAdapter:
    def __init__(self, config, transport=None):
        self.config = config
        self._client = httpx.Client(
            base_url=config.endpoint,
            timeout=config.timeout,
            transport=transport,
            headers=(
                {"Authorization": f"Bearer {config.auth}"} if config.auth else {}
            ),
        )

    @property
    def version(self):
        return self.config.model or f"remote-{self.config.name}"

    def _post(self, path, payload):
        payload = dict(payload)
        payload["model"] = self.config.model
        attempts = self.config.retries + 1
        last = None
        for _ in range(attempts):
            try:
                resp = self._client.post(path, json=payload)
            except httpx.TransportError as e:
                last = e
                continue
            if resp.status_code >= 500:
                last = RuntimeError(f"server error {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise ProtocolError(
                    f"{self.config.name} {path}: unexpected status {resp.status_code}"
                )
            try:
                return resp.json()
            except ValueError as e:
                raise ProtocolError(
                    f"{self.config.name} {path}: response is not JSON: {e}"
                ) from None
        raise BackendUnavailable(
            f"{self.config.name} {path}: gave up after {attempts} attempts: {last}"
        )

    def _field(self, doc, key):
        if not isinstance(doc, dict) or key not in doc:
            raise ProtocolError(f"{self.config.name}: response missing {key!r}")
        return doc[key]


class RemoteSegmenter(_HttpAdapter):
    def segment(self, image, seed=0):
        doc = self._post("/segment", {"image": encode_image(image), "seed": seed})
        return decode_mask(self._field(doc, "mask"))


class RemoteInpainter(_HttpAdapter):
    def inpaint(self, image, mask, background, prompt="", seed=0):
        doc = self._post(
            "/inpaint",
            {
                "image": encode_image(image),
                "mask": encode_mask(mask),
                "background": encode_image(background),
                "prompt": prompt,
                "seed": seed,
            },
        )
        return decode_image(self._field(doc, "image"))


class RemoteTextCompleter(_HttpAdapter):
    def complete_text(self, system, prompt, seed=0):
        doc = self._post(
            "/complete", {"system": system, "prompt": prompt, "seed": seed}
        )
        text = self._field(doc, "text")
        if not isinstance(text, str) or not text.strip():
            raise EmptyCompletion(f"{self.config.name}: completion came back empty")
        return text


class RemoteCaptioner(_HttpAdapter):
    def caption_image(self, image, instruction="", seed=0):
        doc = self._post(
            "/caption",
            {"image": encode_image(image), "instruction": instruction, "seed": seed},
        )
        text = self._field(doc, "text")
        if not isinstance(text, str) or not text.strip():
            raise EmptyCompletion(f"{self.config.name}: caption came back empty")
        return text


class RemoteDetector(_HttpAdapter):
    """Detection threshold is applied on this side of the wire."""

    def detect_objects(self, image, queries, threshold=0.1, seed=0):
        doc = self._post(
            "/detect",
            {"image": encode_image(image), "queries": list(queries), "seed": seed},
        )
        out = []
        for row in self._field(doc, "detections"):
            try:
                box = clamp_detection(
                    row["label"],
                    float(row["x"]),
                    float(row["y"]),
                    float(row["w"]),
                    float(row["h"]),
                    float(row.get("confidence", 1.0)),
                    image.width,
                    image.height,
                )
            except (KeyError, TypeError, ValueError) as e:
                raise ProtocolError(
                    f"{self.config.name}: malformed detection row: {e}"
                ) from None
            if box is not None and box.confidence >= threshold:
                out.append(box)
        return out


class RemoteEmbedder(_HttpAdapter):
    def embed_image(self, image):
        doc = self._post("/embed/image", {"image": encode_image(image)})
        return self._vector(doc)

    def embed_text(self, text):
        doc = self._post("/embed/text", {"text": text})
        return self._vector(doc)

    def count_text_tokens(self, text):
        doc = self._post("/tokens", {"text": text})
        count = self._field(doc, "count")
        if not isinstance(count, int) or count < 0:
            raise ProtocolError(f"{self.config.name}: bad token count {count!r}")
        return count

    def _vector(self, doc):
        values = self._field(doc, "embedding")
        if not isinstance(values, list) or not values:
            raise ProtocolError(f"{self.config.name}: embedding is not a list")
        return EmbeddingVector(values, normalized=bool(doc.get("normalized", True)))


def remote_backend_set(configs, transport=None):
    """Build all six adapters from a name -> BackendConfig mapping."""
    return BackendSet(
        segmenter=RemoteSegmenter(configs["segmenter"], transport),
        inpainter=RemoteInpainter(configs["inpainter"], transport),
        completer=RemoteTextCompleter(configs["completer"], transport),
        captioner=RemoteCaptioner(configs["captioner"], transport),
        detector=RemoteDetector(configs["detector"], transport),
        embedder=RemoteEmbedder(configs["embedder"], transport),
    )
