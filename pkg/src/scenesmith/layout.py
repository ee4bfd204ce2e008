"""Scene layout via language-model completions.

Builds the prompt (system template, few-shot examples, object query),
parses the tuple-list answer back into boxes, fixes scale with a
second ratio query, and repairs geometry until every box fits the
canvas with pairwise IoU under the configured ceiling.  When a
completion is hopeless there is always the deterministic grid
fallback, so the pipeline never stalls on a bad layout.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from importlib import resources

from .errors import (
    BackgroundParseError,
    IncompleteLayout,
    IncompleteScales,
    LayoutParseError,
    ScaleOutOfRange,
    UnknownObject,
)
from .seeds import seeded_rng

DEFAULT_IOU_THRESHOLD = 0.05

_LOCATIVE_STARTERS = {
    "in", "on", "at", "by", "near", "under", "over", "inside", "outside",
    "beside", "behind", "along", "among", "amid", "amidst", "within",
    "atop", "underneath", "next", "above", "below", "around", "against",
}


@dataclass
class BoundingBox:
    """Top-left corner plus size, in canvas pixels."""

    concept_id: str
    x: float
    y: float
    w: float
    h: float

    def to_dict(self):
        return {
            "concept_id": self.concept_id,
            "x": self.x,
            "y": self.y,
            "w": self.w,
            "h": self.h,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["concept_id"], d["x"], d["y"], d["w"], d["h"])


@dataclass
class Layout:
    composition_id: str
    canvas_width: int
    canvas_height: int
    boxes: list[BoundingBox] = field(default_factory=list)
    source: str = "llm"

    def to_dict(self):
        return {
            "composition_id": self.composition_id,
            "canvas": {"width": self.canvas_width, "height": self.canvas_height},
            "source": self.source,
            "boxes": [b.to_dict() for b in self.boxes],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            composition_id=d["composition_id"],
            canvas_width=d["canvas"]["width"],
            canvas_height=d["canvas"]["height"],
            boxes=[BoundingBox.from_dict(b) for b in d["boxes"]],
            source=d["source"],
        )


@dataclass
class ScaleRatioSet:
    """Per-concept real-world size ratios, largest exactly 1.0."""

    ratios: dict[str, float]


@dataclass
class BackgroundPromptSet:
    composition_id: str
    prompts: list[str]


def _template(name):
    return (
        resources.files("scenesmith")
        .joinpath(f"templates/{name}.v1.txt")
        .read_text(encoding="utf-8")
    )


def layout_system_prompt(width, height):
    return _template("layout_system").format(width=width, height=height).rstrip("\n")


def layout_few_shot():
    return _template("layout_few_shot").rstrip("\n")


def scale_system_prompt():
    return _template("scale_system").rstrip("\n")


def background_system_prompt():
    return _template("background_system").rstrip("\n")


def background_few_shot():
    return _template("background_few_shot").rstrip("\n")


def object_query(labels):
    """"one car, one cat, one dog and one house" for [car,cat,dog,house]."""
    parts = [f"one {label}" for label in labels]
    if len(parts) == 1:
        return parts[0]
    return ", ".join(parts[:-1]) + " and " + parts[-1]


def build_layout_prompt(composition, concepts):
    """System template, few-shot block, and object query for a composition.

    ``concepts`` are the resolved Concept records in composition order;
    the composition itself only stores ids.
    """
    system = layout_system_prompt(composition.canvas_width, composition.canvas_height)
    query = object_query([c.category_label for c in concepts])
    return system, layout_few_shot(), query


_TUPLE_START = re.compile(r"[(\[]\s*['\"][^'\"]+['\"]\s*,\s*\[")
_TUPLE = re.compile(
    r"""[(\[]\s*
        ['\"](?P<name>[^'\"]+)['\"]\s*,\s*
        \[\s*(?P<a>-?\d+(?:\.\d+)?)\s*,
        \s*(?P<b>-?\d+(?:\.\d+)?)\s*,
        \s*(?P<c>-?\d+(?:\.\d+)?)\s*,
        \s*(?P<d>-?\d+(?:\.\d+)?)\s*\]\s*[)\]]""",
    re.VERBOSE,
)


def parse_layout_response(text, composition, concepts, canvas=None):
    """Read "('name', [x, y, w, h])" tuples out of a completion.

    Tolerates prose around the tuples.  Names map to concepts by
    category label, first unmatched concept in composition order wins,
    so duplicate labels are assigned greedily.  Numbers are stored as
    given; geometry problems are repair's business, not the parser's.
    """
    if not text or not text.strip():
        raise LayoutParseError("empty layout response", offset=0)
    canvas = canvas or (composition.canvas_width, composition.canvas_height)

    entries = []
    for start in _TUPLE_START.finditer(text):
        m = _TUPLE.match(text, start.start())
        if m is None:
            raise LayoutParseError(
                f"malformed box tuple at offset {start.start()}",
                offset=start.start(),
            )
        w = float(m.group("c"))
        h = float(m.group("d"))
        if w <= 0 or h <= 0:
            raise LayoutParseError(
                f"box for {m.group('name')!r} has non-positive size",
                offset=start.start(),
            )
        entries.append(
            (m.group("name").strip(), float(m.group("a")), float(m.group("b")), w, h)
        )
    if not entries:
        raise LayoutParseError("no box tuples found in response", offset=0)

    unmatched = [(c.concept_id, c.category_label.lower()) for c in concepts]
    all_labels = {c.category_label.lower() for c in concepts}
    boxes = []
    for name, x, y, w, h in entries:
        key = name.lower()
        hit = next((i for i, (_, label) in enumerate(unmatched) if label == key), None)
        if hit is None:
            if key in all_labels:
                raise UnknownObject(
                    f"extra {name!r} box: every {name!r} concept already has one"
                )
            raise UnknownObject(f"object {name!r} is not part of the composition")
        concept_id, _ = unmatched.pop(hit)
        boxes.append(BoundingBox(concept_id, x, y, w, h))
    if unmatched:
        missing = ", ".join(cid for cid, _ in unmatched)
        raise IncompleteLayout(f"response left concepts without boxes: {missing}")

    return Layout(
        composition_id=composition.composition_id,
        canvas_width=canvas[0],
        canvas_height=canvas[1],
        boxes=boxes,
        source="llm",
    )


def box_iou(a, b):
    """IoU of two (x, y, w, h) boxes."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    ix = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    if union <= 0:
        return 0.0
    return inter / union


def _max_pairwise_iou(boxes):
    worst = 0.0
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            worst = max(worst, box_iou(boxes[i], boxes[j]))
    return worst


def _looks_corner_format(boxes, width, height):
    """Detect [x1, y1, x2, y2] tuples masquerading as [x, y, w, h].

    Completions sometimes come back corner-style.  The giveaway: every
    tuple reads as corners (third > first, fourth > second) while the
    width/height reading would overflow even the layout's own
    coordinate scale (the larger of the canvas and the biggest value
    seen).  A layout that already fits its canvas never trips this.
    """
    if not all(w > x and h > y for x, y, w, h in boxes):
        return False
    scale = float(max(width, height))
    for values in boxes:
        scale = max(scale, *values)
    extent = max(max(x + w, y + h) for x, y, w, h in boxes)
    return extent > scale


def _shrink_about_center(box, s):
    x, y, w, h = box
    cx = x + w / 2.0
    cy = y + h / 2.0
    nw = w * s
    nh = h * s
    return (cx - nw / 2.0, cy - nh / 2.0, nw, nh)


def _shrink_to_iou(boxes, threshold):
    """Largest uniform about-center shrink putting every pair under IoU.

    Returns None when no shrink helps (concentric boxes keep constant
    IoU all the way down).
    """
    margin = threshold - 1e-9 if threshold > 1e-6 else threshold

    def ok(s):
        return _max_pairwise_iou([_shrink_about_center(b, s) for b in boxes]) <= margin

    lo = 1e-3
    if not ok(lo):
        return None
    hi = 1.0
    for _ in range(60):
        mid = (lo + hi) / 2.0
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return [_shrink_about_center(b, lo) for b in boxes]


def validate_and_repair_layout(layout, iou_threshold=DEFAULT_IOU_THRESHOLD):
    """Force a layout to satisfy containment and the overlap ceiling.

    Model coordinates are treated as unit-free: when the layout spills
    past the canvas it is rescaled as a whole (relative geometry kept),
    then individual boxes are shrunk about their centers and translated
    inside, then a single uniform about-center shrink resolves
    overlaps.  If even that fails, the deterministic grid takes over.
    A layout that already satisfies everything is returned untouched.
    """
    W = float(layout.canvas_width)
    H = float(layout.canvas_height)
    original = [(b.x, b.y, b.w, b.h) for b in layout.boxes]
    if not original:
        return layout

    boxes = list(original)
    if _looks_corner_format(boxes, W, H):
        boxes = [(x, y, w - x, h - y) for x, y, w, h in boxes]

    # Rescale only on genuine overflow; extents can be <= 0 when every
    # box sits at negative coordinates, and those must not set the scale.
    extent_x = max(x + w for x, y, w, h in boxes)
    extent_y = max(y + h for x, y, w, h in boxes)
    s = 1.0
    if extent_x > W:
        s = min(s, W / extent_x)
    if extent_y > H:
        s = min(s, H / extent_y)
    if s < 1.0:
        boxes = [(x * s, y * s, w * s, h * s) for x, y, w, h in boxes]

    placed = []
    for x, y, w, h in boxes:
        if w > W or h > H:
            x, y, w, h = _shrink_about_center(
                (x, y, w, h), min(W / w, H / h)
            )
        x = min(max(x, 0.0), W - w)
        y = min(max(y, 0.0), H - h)
        placed.append((x, y, w, h))
    boxes = placed

    if _max_pairwise_iou(boxes) > iou_threshold:
        shrunk = _shrink_to_iou(boxes, iou_threshold)
        if shrunk is None:
            return _grid_layout(
                [b.concept_id for b in layout.boxes],
                layout.composition_id,
                layout.canvas_width,
                layout.canvas_height,
                seed=0,
            )
        boxes = shrunk

    if boxes == original:
        return layout
    return Layout(
        composition_id=layout.composition_id,
        canvas_width=layout.canvas_width,
        canvas_height=layout.canvas_height,
        boxes=[
            BoundingBox(b.concept_id, x, y, w, h)
            for b, (x, y, w, h) in zip(layout.boxes, boxes)
        ],
        source="repaired",
    )


def build_scale_prompt(composition, concepts):
    """Object-name list for the real-world scale ratio query."""
    labels = []
    for c in concepts:
        if c.category_label not in labels:
            labels.append(c.category_label)
    return ", ".join(labels)


_SCALE_PAIR = re.compile(r"([A-Za-z][A-Za-z ]*?)\s*:\s*(-?\d+(?:\.\d+)?)")


def parse_scale_response(text, composition, concepts):
    """Read "car: 1.0, sheep: 0.2" into per-concept ratios.

    Raw values must sit in (0, 1]; afterwards everything is divided by
    the largest so the biggest object lands on exactly 1.0 even when
    the model never said so itself.
    """
    by_label = {}
    for m in _SCALE_PAIR.finditer(text):
        by_label[m.group(1).strip().lower()] = float(m.group(2))

    ratios = {}
    for c in concepts:
        key = c.category_label.lower()
        if key not in by_label:
            raise IncompleteScales(f"no scale ratio for {c.category_label!r}")
        r = by_label[key]
        if r <= 0 or r > 1:
            raise ScaleOutOfRange(
                f"ratio {r} for {c.category_label!r} outside (0, 1]"
            )
        ratios[c.concept_id] = r
    top = max(ratios.values())
    return ScaleRatioSet({cid: r / top for cid, r in ratios.items()})


def apply_scale_ratios(layout, ratios, iou_threshold=DEFAULT_IOU_THRESHOLD):
    """Resize boxes so their relative sizes match the given ratios.

    A box's implied ratio is its max dimension over the layout's
    global max dimension; width and height are multiplied by the same
    factor (aspect untouched), the box is recentered where it was, and
    the result goes back through repair.
    """
    table = ratios.ratios if isinstance(ratios, ScaleRatioSet) else dict(ratios)
    missing = [b.concept_id for b in layout.boxes if b.concept_id not in table]
    if missing:
        raise IncompleteScales(f"ratios missing concepts: {', '.join(missing)}")

    global_max = max(max(b.w, b.h) for b in layout.boxes)
    scaled = []
    for b in layout.boxes:
        implied = max(b.w, b.h) / global_max
        f = table[b.concept_id] / implied
        cx = b.x + b.w / 2.0
        cy = b.y + b.h / 2.0
        nw = b.w * f
        nh = b.h * f
        scaled.append(BoundingBox(b.concept_id, cx - nw / 2.0, cy - nh / 2.0, nw, nh))
    return validate_and_repair_layout(
        Layout(
            composition_id=layout.composition_id,
            canvas_width=layout.canvas_width,
            canvas_height=layout.canvas_height,
            boxes=scaled,
            source=layout.source,
        ),
        iou_threshold=iou_threshold,
    )


def build_background_prompt(composition, concepts):
    """The object phrase sent to the scene-prompt query."""
    return object_query([c.category_label for c in concepts])


def parse_background_response(text, composition_id=""):
    """Split the comma-separated background line into prompts.

    Accepts either the bare list or a line with the "background
    prompt:" marker in front.  Each prompt must start with a locative
    preposition, which is what the downstream caption templates expect
    to splice in.
    """
    if not text or not text.strip():
        raise BackgroundParseError("empty background response")
    line = text.strip()
    marker = re.search(r"background prompt\s*:", line, flags=re.IGNORECASE)
    if marker:
        line = line[marker.end():]
    prompts = [p.strip() for p in line.split(",")]
    prompts = [p for p in prompts if p]
    if not prompts:
        raise BackgroundParseError("no background prompts in response")
    for p in prompts:
        first = p.split()[0].lower()
        if first not in _LOCATIVE_STARTERS:
            raise BackgroundParseError(
                f"background prompt {p!r} does not start with a locative preposition"
            )
    return BackgroundPromptSet(composition_id=composition_id, prompts=prompts)


def fallback_layout(composition, canvas=None, seed=0):
    """Deterministic grid placement, the layout of last resort."""
    canvas = canvas or (composition.canvas_width, composition.canvas_height)
    return _grid_layout(
        list(composition.concept_ids),
        composition.composition_id,
        canvas[0],
        canvas[1],
        seed,
    )


def _grid_layout(concept_ids, composition_id, width, height, seed):
    k = len(concept_ids)
    cols = math.ceil(math.sqrt(k))
    rows = math.ceil(k / cols)
    cw = width / cols
    ch = height / rows
    bw = max(1.0, float(math.floor(0.8 * cw)))
    bh = max(1.0, float(math.floor(0.8 * ch)))
    rng = seeded_rng("fallback", composition_id, width, height, seed)
    boxes = []
    if k == 1:
        boxes.append(
            BoundingBox(concept_ids[0], (width - bw) / 2.0, (height - bh) / 2.0, bw, bh)
        )
    else:
        for i, cid in enumerate(concept_ids):
            r, c = divmod(i, cols)
            jx = rng.uniform(-0.05, 0.05) * cw
            jy = rng.uniform(-0.05, 0.05) * ch
            boxes.append(
                BoundingBox(cid, c * cw + 0.1 * cw + jx, r * ch + 0.1 * ch + jy, bw, bh)
            )
    return Layout(
        composition_id=composition_id,
        canvas_width=width,
        canvas_height=height,
        boxes=boxes,
        source="fallback",
    )
