"""Deterministic in-process backends.

Every mock is a pure function of its inputs plus the explicit seed, so
two runs on any platform produce byte-identical outputs.  Fixtures are
planted through PNG tEXt chunks: "labels" (comma-joined) feeds the
captioner, "detections" (JSON list) feeds the detector, "embed_key"
pins the embedder to a reproducible vector.
"""

from __future__ import annotations

import hashlib
import json
import math
import re

import numpy as np
from PIL import Image

from ..errors import PreconditionError
from ..seeds import seeded_rng
from .base import EmbeddingVector, clamp_detection
from .wire import read_text_chunks

_NUMBER_WORDS = {
    "one": 1,
    "two": 2,
    "three": 3,
    "four": 4,
    "five": 5,
    "six": 6,
    "seven": 7,
    "eight": 8,
    "nine": 9,
    "ten": 10,
}

# Rough real-world size ranking used to invent scale ratios for labels
# the canned responses do not cover.
_SCALE_TABLE = {
    "house": 1.0,
    "car": 0.9,
    "person": 0.65,
    "sheep": 0.4,
    "dog": 0.3,
    "cat": 0.25,
}
_SCALE_DEFAULT = 0.5

_LAYOUT_EXAMPLE_QUERY = "one car, one cat, one dog and one house"
_LAYOUT_EXAMPLE_RESPONSE = (
    "([('car', [0, 960, 836, 1408]), ('cat', [1364, 1476, 1856, 1864]), "
    "('dog', [280, 1460, 880, 2048]), ('house', [960, 772, 2048, 2016])])"
)
_BACKGROUND_RESPONSE = (
    "The background prompt: on the street,in the suburban neighborhood,"
    "in the countryside"
)


class MockSegmenter:
    """Reads the foreground straight off the alpha channel."""

    version = "mock-segmenter/1"

    def segment(self, image, seed=0):
        if "A" in image.getbands():
            alpha = np.asarray(image.getchannel("A"), dtype=np.float64)
            return alpha / 255.0
        gray = np.asarray(image.convert("L"), dtype=np.float64)
        return (gray > 0).astype(np.float64)


class MockInpainter:
    """Blends composite and background through the soft mask.

    out = mask * image + (1 - mask) * background, computed in float64
    and rounded once to uint8.
    """

    version = "mock-inpainter/1"

    def inpaint(self, image, mask, background, prompt="", seed=0):
        fg = np.asarray(image.convert("RGB"), dtype=np.float64)
        bg = np.asarray(background.convert("RGB"), dtype=np.float64)
        m = np.asarray(mask, dtype=np.float64)
        if fg.shape != bg.shape or m.shape != fg.shape[:2]:
            raise PreconditionError(
                f"inpaint shapes disagree: image {fg.shape}, "
                f"background {bg.shape}, mask {m.shape}"
            )
        out = m[..., None] * fg + (1.0 - m[..., None]) * bg
        return Image.fromarray(np.round(out).astype(np.uint8), mode="RGB")


class MockTextCompleter:
    """Routes by task wording and answers from canned material.

    The worked layout example gets its response verbatim; any other
    layout query gets a deterministic grid.  Scale queries are answered
    from a small real-world size table renormalized so the largest
    object is exactly 1.0.
    """

    version = "mock-completer/1"

    def complete_text(self, system, prompt, seed=0):
        lowered = system.lower()
        if "scale ratio" in lowered:
            return self._scales(prompt)
        if "scene generator" in lowered:
            return _BACKGROUND_RESPONSE
        return self._layout(system, prompt)

    def _layout(self, system, prompt):
        if prompt.strip() == _LAYOUT_EXAMPLE_QUERY:
            return _LAYOUT_EXAMPLE_RESPONSE
        labels = parse_object_phrase(prompt)
        size = 512
        m = re.search(r"HIGHER THAN (\d+)", system)
        if m:
            size = int(m.group(1))
        cols = math.ceil(math.sqrt(len(labels)))
        rows = math.ceil(len(labels) / cols)
        cw = size / cols
        ch = size / rows
        parts = []
        for i, label in enumerate(labels):
            r, c = divmod(i, cols)
            x = round(c * cw + 0.1 * cw)
            y = round(r * ch + 0.1 * ch)
            parts.append(
                f"('{label}', [{x}, {y}, {round(0.8 * cw)}, {round(0.8 * ch)}])"
            )
        return "([" + ", ".join(parts) + "])"

    def _scales(self, prompt):
        labels = []
        for label in parse_object_phrase(prompt):
            if label not in labels:
                labels.append(label)
        ratios = [_SCALE_TABLE.get(label, _SCALE_DEFAULT) for label in labels]
        top = max(ratios)
        return ", ".join(
            f"{label}: {_fmt_ratio(r / top)}" for label, r in zip(labels, ratios)
        )


class MockCaptioner:
    """Describes whatever labels were planted on the image."""

    version = "mock-captioner/1"

    def caption_image(self, image, instruction="", seed=0):
        planted = read_text_chunks(image).get("labels", "")
        labels = [x for x in planted.split(",") if x]
        if not labels:
            return "a photo of a scene"
        return "a photo of " + join_phrase(labels)


class MockDetector:
    """Returns planted detections at full confidence, clamped to bounds."""

    version = "mock-detector/1"

    def detect_objects(self, image, queries, threshold=0.1, seed=0):
        planted = read_text_chunks(image).get("detections")
        if not planted:
            return []
        try:
            rows = json.loads(planted)
        except json.JSONDecodeError:
            return []
        out = []
        wanted = set(queries)
        for row in rows:
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
            if box is None:
                continue
            if wanted and box.label not in wanted:
                continue
            if box.confidence < threshold:
                continue
            out.append(box)
        return out


class MockEmbedder:
    """Hash-seeded unit vectors, with an override table for tests.

    The same key always maps to the same vector.  Image keys come from
    the planted "embed_key" chunk when present, otherwise from the
    pixel bytes, so visually identical PNGs embed identically.
    """

    version = "mock-embedder/1"

    def __init__(self, dim=512, planted=None):
        self.dim = dim
        self.planted = dict(planted or {})

    def embed_image(self, image):
        key = read_text_chunks(image).get("embed_key")
        if key is None:
            digest = hashlib.sha256()
            digest.update(image.mode.encode())
            digest.update(str(image.size).encode())
            digest.update(image.tobytes())
            key = "pixels:" + digest.hexdigest()
        return self._vector(key)

    def embed_text(self, text):
        return self._vector(text)

    def count_text_tokens(self, text):
        return len(text.split()) + 2

    def _vector(self, key):
        if key in self.planted:
            v = np.asarray(self.planted[key], dtype=np.float64)
            norm = float(np.linalg.norm(v))
            if norm == 0.0:
                raise PreconditionError(f"planted embedding for {key!r} is zero")
            return EmbeddingVector(v / norm)
        v = seeded_rng("embed", key).standard_normal(self.dim)
        return EmbeddingVector(v / np.linalg.norm(v))


def parse_object_phrase(phrase):
    """Expand "one car, one cat and two dogs" into a label list.

    Count words and digits both work; a bare label counts once.  A
    trailing s is stripped only when the count exceeds one.
    """
    labels = []
    for chunk in re.split(r",\s*|\s+and\s+", phrase.strip()):
        chunk = chunk.strip()
        if not chunk:
            continue
        words = chunk.split()
        count = 1
        if words and (words[0] in _NUMBER_WORDS or words[0].isdigit()):
            count = _NUMBER_WORDS.get(words[0]) or int(words[0])
            words = words[1:]
        label = " ".join(words)
        if count > 1 and label.endswith("s"):
            label = label[:-1]
        labels.extend([label] * count)
    return labels


def join_phrase(labels):
    """Join labels the way a caption reads: "a, b and c"."""
    if len(labels) == 1:
        return labels[0]
    return ", ".join(labels[:-1]) + " and " + labels[-1]


def _fmt_ratio(r):
    s = f"{r:.6g}"
    if "." not in s and "e" not in s:
        s += ".0"
    return s


def mock_backend_set(embed_planted=None):
    from .base import BackendSet

    return BackendSet(
        segmenter=MockSegmenter(),
        inpainter=MockInpainter(),
        completer=MockTextCompleter(),
        captioner=MockCaptioner(),
        detector=MockDetector(),
        embedder=MockEmbedder(planted=embed_planted),
    )
