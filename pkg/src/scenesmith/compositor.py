"""Cutout extraction, placement, mask smoothing, and repainting.

The composite stage is pure pixel math: masks are float arrays in
[0, 1], images are PIL, and the only nondeterminism allowed in is the
explicit seed handed to the inpainting backend.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import (
    EmptySegmentation,
    NoBackgroundAvailable,
    PreconditionError,
)


@dataclass
class ForegroundAsset:
    """One segmented object, cropped to its tight bounding box.

    ``tight_bbox`` is (x, y, w, h) in the source image's coordinates;
    cutout and mask are already cropped to it, so their borders all
    touch foreground.
    """

    concept_id: str
    source_image_ref: str
    cutout: Image.Image
    mask: np.ndarray
    tight_bbox: tuple[int, int, int, int]


@dataclass
class CompositeCanvas:
    fg_image: Image.Image
    fg_mask: np.ndarray
    layout_ref: str | None = None


@dataclass
class SoftMask:
    values: np.ndarray
    window: int


def extract_asset(concept_image, segmenter, concept_id="", source_ref="", seed=0):
    """Segment one source image into a transparent cutout.

    The backend's soft mask is thresholded at 0.5 into a binary asset
    mask; thresholding an already-binary mask changes nothing.
    """
    raw = segmenter.segment(concept_image, seed=seed)
    binary = (np.asarray(raw, dtype=np.float64) >= 0.5).astype(np.float64)
    ys, xs = np.nonzero(binary)
    if ys.size == 0:
        raise EmptySegmentation(
            f"no foreground pixels in {source_ref or 'image'} at threshold 0.5"
        )
    x0, x1 = int(xs.min()), int(xs.max()) + 1
    y0, y1 = int(ys.min()), int(ys.max()) + 1
    mask = binary[y0:y1, x0:x1]
    rgb = concept_image.convert("RGB").crop((x0, y0, x1, y1))
    alpha = Image.fromarray((mask * 255).astype(np.uint8), mode="L")
    cutout = rgb.convert("RGBA")
    cutout.putalpha(alpha)
    return ForegroundAsset(
        concept_id=concept_id,
        source_image_ref=source_ref,
        cutout=cutout,
        mask=mask,
        tight_bbox=(x0, y0, x1 - x0, y1 - y0),
    )


def _inner_pixel_box(box, width, height):
    """Largest integer pixel rect fully inside a float box and the canvas."""
    x0 = max(0, math.ceil(box.x - 1e-9))
    y0 = max(0, math.ceil(box.y - 1e-9))
    x1 = min(width, math.floor(box.x + box.w + 1e-9))
    y1 = min(height, math.floor(box.y + box.h + 1e-9))
    return x0, y0, max(0, x1 - x0), max(0, y1 - y0)


def place_foregrounds(assets, layout):
    """Paste assets into their layout boxes on a black canvas.

    Each asset is scaled aspect-preserving to fit inside its box and
    centered there.  Boxes are processed in layout order, so a later
    asset covers an earlier one where they overlap.  The canvas mask is
    the per-pixel max of the placed masks.
    """
    width = int(layout.canvas_width)
    height = int(layout.canvas_height)
    queues = {}
    for a in assets:
        queues.setdefault(a.concept_id, []).append(a)
    ordered = []
    for box in layout.boxes:
        pool = queues.get(box.concept_id)
        if not pool:
            raise PreconditionError(
                f"no asset for layout box of concept {box.concept_id!r}"
            )
        ordered.append((pool.pop(0), box))
    leftover = sum(len(v) for v in queues.values())
    if leftover:
        raise PreconditionError(f"{leftover} assets have no layout box")

    fg = np.zeros((height, width, 3), dtype=np.uint8)
    fg_mask = np.zeros((height, width), dtype=np.float64)
    for asset, box in ordered:
        px, py, pw, ph = _inner_pixel_box(box, width, height)
        if pw < 1 or ph < 1:
            continue
        cw, ch = asset.cutout.size
        scale = min(pw / cw, ph / ch)
        nw = max(1, int(cw * scale))
        nh = max(1, int(ch * scale))
        nx = px + (pw - nw) // 2
        ny = py + (ph - nh) // 2
        rgb = np.asarray(
            asset.cutout.convert("RGB").resize((nw, nh), Image.Resampling.BILINEAR)
        )
        mask_img = Image.fromarray((asset.mask * 255).astype(np.uint8), mode="L")
        m = (
            np.asarray(mask_img.resize((nw, nh), Image.Resampling.NEAREST), dtype=np.float64)
            / 255.0
        )
        region = fg[ny : ny + nh, nx : nx + nw]
        region[m > 0] = rgb[m > 0]
        patch = fg_mask[ny : ny + nh, nx : nx + nw]
        np.maximum(patch, m, out=patch)

    return CompositeCanvas(
        fg_image=Image.fromarray(fg, mode="RGB"),
        fg_mask=fg_mask,
        layout_ref=None,
    )


def smooth_mask(mask, window=5):
    """Windowed arithmetic mean with replicate-edge padding.

    Replicate padding keeps constant masks fixed points: an all-ones
    mask stays all ones instead of eroding at the borders.
    """
    if window < 1 or window % 2 == 0:
        raise PreconditionError(f"smoothing window must be odd and >= 1, got {window}")
    m = np.asarray(mask, dtype=np.float64)
    if m.size == 0:
        raise PreconditionError("mask is empty")
    if float(m.min()) < 0.0 or float(m.max()) > 1.0:
        raise PreconditionError("mask values must lie in [0, 1]")
    if window == 1:
        return SoftMask(values=m.copy(), window=window)
    out = ndimage.uniform_filter(m, size=window, mode="nearest")
    np.clip(out, 0.0, 1.0, out=out)
    return SoftMask(values=out, window=window)


def _keywords(text):
    drop = {"a", "an", "the", "in", "on", "at", "of", "and", "to", "by"}
    return {w for w in text.lower().split() if w not in drop}


@dataclass
class BackgroundEntry:
    bg_id: str
    image_ref: str
    tags: list[str]


def select_background(composition, prompt, background_library):
    """Deterministic library pick: best keyword overlap, ties by id."""
    if not background_library:
        raise NoBackgroundAvailable(
            f"no background images available for {composition.composition_id!r}"
        )
    keys = _keywords(prompt)
    best = None
    for entry in sorted(background_library, key=lambda e: e.bg_id):
        score = len(keys & {t.lower() for t in entry.tags})
        if best is None or score > best[0]:
            best = (score, entry)
    return best[1].image_ref


def repaint(canvas, soft_mask, bg_image, prompt, inpainter, seed=0):
    """One backend call blending the composite into the background."""
    w, h = canvas.fg_image.size
    if bg_image.size != (w, h) or soft_mask.values.shape != (h, w):
        raise PreconditionError(
            f"repaint dimensions disagree: fg {canvas.fg_image.size}, "
            f"bg {bg_image.size}, mask {soft_mask.values.shape}"
        )
    return inpainter.inpaint(
        canvas.fg_image, soft_mask.values, bg_image, prompt=prompt, seed=seed
    )
