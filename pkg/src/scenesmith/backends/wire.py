"""Wire codecs: images and masks as base64 PNG inside JSON bodies.

Masks travel as 8-bit single-channel PNG, so a float mask is quantized
to 256 levels on the way out and divided back on the way in.  Anything
that must survive a round trip byte-identically should be quantized
with ``quantize_mask`` before first use.
"""

from __future__ import annotations

import base64
import io

import numpy as np
from PIL import Image, PngImagePlugin

from ..errors import ProtocolError


def image_to_png_bytes(image, text_chunks=None):
    """Serialize a PIL image to PNG, optionally planting tEXt chunks."""
    info = PngImagePlugin.PngInfo()
    for key, value in (text_chunks or {}).items():
        info.add_text(key, value)
    buf = io.BytesIO()
    image.save(buf, format="PNG", pnginfo=info)
    return buf.getvalue()


def png_bytes_to_image(data):
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as e:
        raise ProtocolError(f"payload is not a decodable PNG: {e}") from None
    return img


def read_text_chunks(image):
    """tEXt metadata of a PNG as a plain dict, empty for other formats."""
    return dict(getattr(image, "text", {}) or {})


def encode_image(image, text_chunks=None):
    """Base64 PNG.  By default the image's own tEXt chunks ride along."""
    if text_chunks is None:
        text_chunks = read_text_chunks(image)
    return base64.b64encode(image_to_png_bytes(image, text_chunks)).decode("ascii")


def decode_image(b64):
    try:
        raw = base64.b64decode(b64, validate=True)
    except Exception as e:
        raise ProtocolError(f"image field is not valid base64: {e}") from None
    return png_bytes_to_image(raw)


def quantize_mask(mask):
    """Snap a float mask in [0, 1] to the 256 levels the wire can carry."""
    m = np.asarray(mask, dtype=np.float64)
    return np.round(m * 255.0) / 255.0


def mask_to_image(mask):
    m = np.asarray(mask, dtype=np.float64)
    return Image.fromarray(np.round(m * 255.0).astype(np.uint8), mode="L")


def image_to_mask(image):
    if image.mode != "L":
        image = image.convert("L")
    return np.asarray(image, dtype=np.float64) / 255.0


def encode_mask(mask):
    return encode_image(mask_to_image(mask))


def decode_mask(b64):
    return image_to_mask(decode_image(b64))
