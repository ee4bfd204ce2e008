"""Dataset manifest: concepts, compositions, samples.

The manifest is one versioned JSON document.  Image data never lives in
it; every image field is a path-like ref resolved against a dataset
root.  Validation reports problems as data (a list of violations)
instead of raising, so a partially-built dataset can still be loaded,
inspected, and repaired.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import EmptyCorpus, ManifestParseError

SCHEMA_VERSION = "1"


@dataclass
class Concept:
    """One subject the user wants injected into generated scenes."""

    concept_id: str
    category_label: str
    rare_token: str
    image_refs: list[str] = field(default_factory=list)

    def to_dict(self):
        return {
            "concept_id": self.concept_id,
            "category_label": self.category_label,
            "rare_token": self.rare_token,
            "image_refs": list(self.image_refs),
        }

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(
                concept_id=_req(d, "concept_id", str),
                category_label=_req(d, "category_label", str),
                rare_token=_req(d, "rare_token", str),
                image_refs=_str_list(d, "image_refs"),
            )
        except ManifestParseError as e:
            raise ManifestParseError(f"concept: {e}", field=e.field) from None


@dataclass
class Composition:
    """A multi-concept scene request: which concepts, on what canvas."""

    composition_id: str
    concept_ids: list[str]
    background_prompts: list[str]
    canvas_width: int
    canvas_height: int
    global_token: str

    def to_dict(self):
        return {
            "composition_id": self.composition_id,
            "concept_ids": list(self.concept_ids),
            "background_prompts": list(self.background_prompts),
            "canvas_width": self.canvas_width,
            "canvas_height": self.canvas_height,
            "global_token": self.global_token,
        }

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(
                composition_id=_req(d, "composition_id", str),
                concept_ids=_str_list(d, "concept_ids"),
                background_prompts=_str_list(d, "background_prompts"),
                canvas_width=_req(d, "canvas_width", int),
                canvas_height=_req(d, "canvas_height", int),
                global_token=_req(d, "global_token", str),
            )
        except ManifestParseError as e:
            raise ManifestParseError(f"composition: {e}", field=e.field) from None


@dataclass
class Sample:
    """One generated image and everything recorded about producing it.

    Refs are filled in stage by stage; a freshly initialized sample has
    only its id, composition, and seed.  ``rank`` stays None until a
    human reviews the sample.
    """

    sample_id: str
    composition_id: str
    seed: int
    layout_ref: str | None = None
    foreground_ref: str | None = None
    foreground_mask_ref: str | None = None
    background_ref: str | None = None
    final_ref: str | None = None
    short_caption: str | None = None
    detailed_caption: str | None = None
    background_prompt_used: str | None = None
    rank: int | None = None
    backend_versions: dict[str, str] = field(default_factory=dict)

    def to_dict(self):
        return {
            "sample_id": self.sample_id,
            "composition_id": self.composition_id,
            "seed": self.seed,
            "layout_ref": self.layout_ref,
            "foreground_ref": self.foreground_ref,
            "foreground_mask_ref": self.foreground_mask_ref,
            "background_ref": self.background_ref,
            "final_ref": self.final_ref,
            "short_caption": self.short_caption,
            "detailed_caption": self.detailed_caption,
            "background_prompt_used": self.background_prompt_used,
            "rank": self.rank,
            "backend_versions": dict(self.backend_versions),
        }

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(
                sample_id=_req(d, "sample_id", str),
                composition_id=_req(d, "composition_id", str),
                seed=_req(d, "seed", int),
                layout_ref=_opt(d, "layout_ref", str),
                foreground_ref=_opt(d, "foreground_ref", str),
                foreground_mask_ref=_opt(d, "foreground_mask_ref", str),
                background_ref=_opt(d, "background_ref", str),
                final_ref=_opt(d, "final_ref", str),
                short_caption=_opt(d, "short_caption", str),
                detailed_caption=_opt(d, "detailed_caption", str),
                background_prompt_used=_opt(d, "background_prompt_used", str),
                rank=_opt(d, "rank", int),
                backend_versions=_str_map(d, "backend_versions"),
            )
        except ManifestParseError as e:
            raise ManifestParseError(f"sample: {e}", field=e.field) from None


@dataclass
class Manifest:
    """The whole dataset description."""

    schema_version: str = SCHEMA_VERSION
    concepts: list[Concept] = field(default_factory=list)
    compositions: list[Composition] = field(default_factory=list)
    samples: list[Sample] = field(default_factory=list)

    def to_dict(self):
        return {
            "schema_version": self.schema_version,
            "concepts": [c.to_dict() for c in self.concepts],
            "compositions": [c.to_dict() for c in self.compositions],
            "samples": [s.to_dict() for s in self.samples],
        }

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ManifestParseError("manifest document must be a JSON object")
        version = d.get("schema_version")
        if not isinstance(version, str):
            raise ManifestParseError(
                "missing or non-string schema_version", field="schema_version"
            )
        return cls(
            schema_version=version,
            concepts=[Concept.from_dict(x) for x in _obj_list(d, "concepts")],
            compositions=[
                Composition.from_dict(x) for x in _obj_list(d, "compositions")
            ],
            samples=[Sample.from_dict(x) for x in _obj_list(d, "samples")],
        )

    def concept_by_id(self, concept_id):
        for c in self.concepts:
            if c.concept_id == concept_id:
                return c
        return None

    def composition_by_id(self, composition_id):
        for c in self.compositions:
            if c.composition_id == composition_id:
                return c
        return None

    def sample_by_id(self, sample_id):
        for s in self.samples:
            if s.sample_id == sample_id:
                return s
        return None


@dataclass(frozen=True)
class Violation:
    """One validation finding.  ``rule`` is a stable snake_case name."""

    rule: str
    entity_id: str
    message: str


def load_manifest(path):
    with open(path, encoding="utf-8") as f:
        text = f.read()
    return loads_manifest(text)


def loads_manifest(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ManifestParseError(f"not valid JSON: {e}") from None
    return Manifest.from_dict(doc)


def save_manifest(manifest, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps_manifest(manifest))


def dumps_manifest(manifest):
    return json.dumps(manifest.to_dict(), indent=2) + "\n"


def validate_manifest(manifest):
    """Check referential integrity and field constraints.

    Returns a list of Violation records, empty when the manifest is
    clean.  Never raises on bad content; it only describes it.
    """
    out = []
    seen_concepts = set()
    seen_tokens = {}
    for c in manifest.concepts:
        if c.concept_id in seen_concepts:
            out.append(
                Violation("duplicate_concept_id", c.concept_id, "concept id reused")
            )
        seen_concepts.add(c.concept_id)
        if c.rare_token in seen_tokens and seen_tokens[c.rare_token] != c.concept_id:
            out.append(
                Violation(
                    "duplicate_rare_token",
                    c.concept_id,
                    f"rare token {c.rare_token!r} already used by "
                    f"{seen_tokens[c.rare_token]!r}",
                )
            )
        seen_tokens.setdefault(c.rare_token, c.concept_id)
        if not c.image_refs:
            out.append(
                Violation(
                    "no_reference_images", c.concept_id, "concept has no image refs"
                )
            )

    all_rare = {c.rare_token for c in manifest.concepts}
    seen_comps = set()
    for comp in manifest.compositions:
        if comp.composition_id in seen_comps:
            out.append(
                Violation(
                    "duplicate_composition_id",
                    comp.composition_id,
                    "composition id reused",
                )
            )
        seen_comps.add(comp.composition_id)
        if len(comp.concept_ids) < 2:
            out.append(
                Violation(
                    "too_few_concepts",
                    comp.composition_id,
                    "composition needs at least two concepts",
                )
            )
        for cid in comp.concept_ids:
            if cid not in seen_concepts:
                out.append(
                    Violation(
                        "unknown_concept",
                        comp.composition_id,
                        f"references missing concept {cid!r}",
                    )
                )
        if not comp.background_prompts:
            out.append(
                Violation(
                    "no_background_prompts",
                    comp.composition_id,
                    "composition has no background prompts",
                )
            )
        if comp.canvas_width <= 0 or comp.canvas_height <= 0:
            out.append(
                Violation(
                    "bad_canvas",
                    comp.composition_id,
                    f"canvas {comp.canvas_width}x{comp.canvas_height} not positive",
                )
            )
        if comp.global_token in all_rare:
            out.append(
                Violation(
                    "global_token_collision",
                    comp.composition_id,
                    f"global token {comp.global_token!r} collides with a rare token",
                )
            )

    seen_samples = set()
    for s in manifest.samples:
        if s.sample_id in seen_samples:
            out.append(
                Violation("duplicate_sample_id", s.sample_id, "sample id reused")
            )
        seen_samples.add(s.sample_id)
        if s.composition_id not in seen_comps:
            out.append(
                Violation(
                    "unknown_composition",
                    s.sample_id,
                    f"references missing composition {s.composition_id!r}",
                )
            )
        if s.rank is not None and not 1 <= s.rank <= 5:
            out.append(
                Violation(
                    "rank_out_of_range", s.sample_id, f"rank {s.rank} not in 1..5"
                )
            )
    return out


@dataclass
class CaptionStats:
    """Word-count summary over the detailed captions of a manifest."""

    count: int
    mean_words: float
    fraction_over_20: float
    histogram: dict[int, int]


def caption_word_count(caption, excluded_tokens):
    """Whitespace word count, ignoring identifier tokens.

    A caption made only of excluded tokens counts zero words.
    """
    return sum(1 for w in caption.split() if w not in excluded_tokens)


def compute_caption_stats(manifest):
    """Word-count stats over every sample that has a detailed caption.

    Rare tokens and the composition's global token are not words a
    reader would count, so they are excluded before counting.
    """
    token_by_concept = {c.concept_id: c.rare_token for c in manifest.concepts}
    counts = []
    for s in manifest.samples:
        if s.detailed_caption is None:
            continue
        excluded = set()
        comp = manifest.composition_by_id(s.composition_id)
        if comp is not None:
            excluded.add(comp.global_token)
            for cid in comp.concept_ids:
                if cid in token_by_concept:
                    excluded.add(token_by_concept[cid])
        counts.append(caption_word_count(s.detailed_caption, excluded))
    if not counts:
        raise EmptyCorpus("no detailed captions to summarize")
    histogram = {}
    for n in counts:
        histogram[n] = histogram.get(n, 0) + 1
    return CaptionStats(
        count=len(counts),
        mean_words=sum(counts) / len(counts),
        fraction_over_20=sum(1 for n in counts if n > 20) / len(counts),
        histogram=dict(sorted(histogram.items())),
    )


def _req(d, key, typ):
    if key not in d:
        raise ManifestParseError(f"missing field {key!r}", field=key)
    v = d[key]
    if typ is int and isinstance(v, bool):
        raise ManifestParseError(f"field {key!r} has wrong type", field=key)
    if not isinstance(v, typ):
        raise ManifestParseError(f"field {key!r} has wrong type", field=key)
    return v


def _opt(d, key, typ):
    v = d.get(key)
    if v is None:
        return None
    if typ is int and isinstance(v, bool):
        raise ManifestParseError(f"field {key!r} has wrong type", field=key)
    if not isinstance(v, typ):
        raise ManifestParseError(f"field {key!r} has wrong type", field=key)
    return v


def _str_list(d, key):
    v = d.get(key, [])
    if not isinstance(v, list) or not all(isinstance(x, str) for x in v):
        raise ManifestParseError(f"field {key!r} must be a list of strings", field=key)
    return v


def _obj_list(d, key):
    v = d.get(key, [])
    if not isinstance(v, list) or not all(isinstance(x, dict) for x in v):
        raise ManifestParseError(f"field {key!r} must be a list of objects", field=key)
    return v


def _str_map(d, key):
    v = d.get(key, {})
    if not isinstance(v, dict) or not all(
        isinstance(k, str) and isinstance(x, str) for k, x in v.items()
    ):
        raise ManifestParseError(
            f"field {key!r} must map strings to strings", field=key
        )
    return v
