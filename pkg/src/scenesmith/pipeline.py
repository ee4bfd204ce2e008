"""Stage orchestration over a dataset manifest.

Stages run in order (segment, layout, compose, repaint, caption), each
one resumable: a sample that already carries a stage's outputs is
skipped, so killing and restarting never duplicates work or ids.  All
randomness derives from the global seed through composition and sample
ids, so adding a composition never perturbs existing samples.  Stage
outputs are content-addressed PNG/JSON files under the dataset root.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from PIL import Image

from . import captioning, compositor, layout as layout_mod, metrics
from .backends import mock_backend_set, remote_backend_set
from .backends.base import BackendConfig
from .backends.wire import image_to_png_bytes, quantize_mask
from .errors import (
    ConfigError,
    EmptyBundle,
    NotFinalized,
    StageOrderError,
    ValidationError,
)
from .manifest import Sample, load_manifest, save_manifest, validate_manifest
from .seeds import derive_seed, seeded_rng

log = logging.getLogger("scenesmith")

STAGES = ("segment", "layout", "compose", "repaint", "caption")

BACKEND_NAMES = (
    "segmenter",
    "inpainter",
    "completer",
    "captioner",
    "detector",
    "embedder",
)

_TOP_KEYS = {
    "manifest",
    "root",
    "background_library",
    "canvas",
    "smoothing_window",
    "samples_per_composition",
    "seed",
    "stage_seeds",
    "detector_threshold",
    "iou_threshold",
    "recaption",
    "token_budget",
    "caption_attempts",
    "repetitions",
    "backends",
    "reviews",
    "label_constrained_assignment",
    "ti_clip_full_prompt",
    "workers",
}

_BACKEND_KEYS = {"endpoint", "timeout", "retries", "auth", "model"}


@dataclass
class PipelineConfig:
    manifest: str = "manifest.json"
    root: str = ""
    background_library: str | None = None
    canvas_width: int = 512
    canvas_height: int = 512
    smoothing_window: int = 5
    samples_per_composition: int = 4
    seed: int = 0
    stage_seeds: dict = field(default_factory=dict)
    detector_threshold: float = 0.1
    iou_threshold: float = 0.05
    recaption: object = "all"
    token_budget: int = 77
    caption_attempts: int = 3
    repetitions: int = 2
    backends: dict = field(default_factory=dict)
    reviews: str = "reviews.json"
    label_constrained_assignment: bool = False
    ti_clip_full_prompt: bool = False
    workers: int = 1
    config_dir: str = "."

    @classmethod
    def from_dict(cls, doc, config_dir="."):
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(doc) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg = cls(config_dir=config_dir)
        cfg.manifest = _typed(doc, "manifest", str, cfg.manifest)
        cfg.root = _typed(doc, "root", str, cfg.root)
        cfg.background_library = _typed(
            doc, "background_library", str, cfg.background_library, optional=True
        )
        canvas = doc.get("canvas", {})
        if canvas:
            extra = set(canvas) - {"width", "height"}
            if not isinstance(canvas, dict) or extra:
                raise ConfigError("canvas must be {width, height}")
            cfg.canvas_width = _typed(canvas, "width", int, cfg.canvas_width)
            cfg.canvas_height = _typed(canvas, "height", int, cfg.canvas_height)
        cfg.smoothing_window = _typed(doc, "smoothing_window", int, cfg.smoothing_window)
        cfg.samples_per_composition = _typed(
            doc, "samples_per_composition", int, cfg.samples_per_composition
        )
        cfg.seed = _typed(doc, "seed", int, cfg.seed)
        stage_seeds = doc.get("stage_seeds", {})
        if not isinstance(stage_seeds, dict):
            raise ConfigError("stage_seeds must be an object")
        bad = set(stage_seeds) - set(STAGES)
        if bad:
            raise ConfigError(f"stage_seeds has unknown stages: {', '.join(sorted(bad))}")
        for k, v in stage_seeds.items():
            if not isinstance(v, int) or isinstance(v, bool):
                raise ConfigError(f"stage seed for {k!r} must be an integer")
        cfg.stage_seeds = dict(stage_seeds)
        cfg.detector_threshold = float(
            _typed(doc, "detector_threshold", (int, float), cfg.detector_threshold)
        )
        cfg.iou_threshold = float(
            _typed(doc, "iou_threshold", (int, float), cfg.iou_threshold)
        )
        recaption = doc.get("recaption", cfg.recaption)
        if recaption != "all" and not (
            isinstance(recaption, list) and all(isinstance(x, str) for x in recaption)
        ):
            raise ConfigError('recaption must be "all" or a list of composition ids')
        cfg.recaption = recaption
        cfg.token_budget = _typed(doc, "token_budget", int, cfg.token_budget)
        cfg.caption_attempts = _typed(doc, "caption_attempts", int, cfg.caption_attempts)
        cfg.repetitions = _typed(doc, "repetitions", int, cfg.repetitions)
        backends = doc.get("backends", {})
        if not isinstance(backends, dict):
            raise ConfigError("backends must be an object")
        bad = set(backends) - set(BACKEND_NAMES)
        if bad:
            raise ConfigError(f"unknown backend names: {', '.join(sorted(bad))}")
        parsed = {}
        for name, bd in backends.items():
            if not isinstance(bd, dict):
                raise ConfigError(f"backend {name!r} must be an object")
            extra = set(bd) - _BACKEND_KEYS
            if extra:
                raise ConfigError(
                    f"backend {name!r} has unknown keys: {', '.join(sorted(extra))}"
                )
            try:
                parsed[name] = BackendConfig(name=name, **bd)
            except TypeError as e:
                raise ConfigError(f"backend {name!r}: {e}") from None
        cfg.backends = parsed
        cfg.reviews = _typed(doc, "reviews", str, cfg.reviews)
        cfg.label_constrained_assignment = _typed(
            doc, "label_constrained_assignment", bool, cfg.label_constrained_assignment
        )
        cfg.ti_clip_full_prompt = _typed(
            doc, "ti_clip_full_prompt", bool, cfg.ti_clip_full_prompt
        )
        cfg.workers = _typed(doc, "workers", int, cfg.workers)
        if cfg.smoothing_window < 1 or cfg.smoothing_window % 2 == 0:
            raise ConfigError("smoothing_window must be odd and >= 1")
        if cfg.samples_per_composition < 1:
            raise ConfigError("samples_per_composition must be >= 1")
        if cfg.workers < 1:
            raise ConfigError("workers must be >= 1")
        if cfg.token_budget < 1:
            raise ConfigError("token_budget must be >= 1")
        if cfg.caption_attempts < 1:
            raise ConfigError("caption_attempts must be >= 1")
        if cfg.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        return cfg

    @classmethod
    def from_file(cls, path):
        p = Path(path)
        try:
            doc = json.loads(p.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from None
        return cls.from_dict(doc, config_dir=str(p.parent))

    @property
    def manifest_path(self):
        return Path(self.config_dir) / self.manifest

    @property
    def root_path(self):
        if self.root:
            return Path(self.config_dir) / self.root
        return self.manifest_path.parent

    @property
    def reviews_path(self):
        return self.root_path / self.reviews

    def stage_seed(self, stage):
        return self.stage_seeds.get(stage, 0)

    def recaption_wanted(self, composition_id):
        if self.recaption == "all":
            return True
        return composition_id in self.recaption

    def build_backends(self, force_mock=False):
        if force_mock or not self.backends:
            return mock_backend_set()
        missing = [n for n in BACKEND_NAMES if n not in self.backends]
        if missing:
            raise ConfigError(
                f"backends configured but missing: {', '.join(missing)}"
            )
        return remote_backend_set(self.backends)


def _typed(doc, key, typ, default, optional=False):
    if key not in doc:
        return default
    v = doc[key]
    if v is None and optional:
        return None
    if isinstance(v, bool) and typ is not bool and not (
        isinstance(typ, tuple) and bool in typ
    ):
        raise ConfigError(f"config key {key!r} has wrong type")
    if not isinstance(v, typ):
        raise ConfigError(f"config key {key!r} has wrong type")
    return v


@dataclass
class StageReport:
    stage: str
    produced: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    blocked: list = field(default_factory=list)
    failed: list = field(default_factory=list)

    def to_dict(self):
        return {
            "stage": self.stage,
            "produced": list(self.produced),
            "skipped": list(self.skipped),
            "blocked": list(self.blocked),
            "failed": [list(f) for f in self.failed],
        }


def _atomic_write(path, data):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.{hashlib.sha256(data).hexdigest()[:8]}.tmp")
    tmp.write_bytes(data)
    tmp.replace(path)


def _store_bytes(root, subdir, data, ext):
    """Content-addressed save; returns the manifest-relative ref."""
    digest = hashlib.sha256(data).hexdigest()[:16]
    rel = f"{subdir}/{digest}{ext}"
    path = Path(root) / rel
    if not path.exists():
        _atomic_write(path, data)
    return rel


def load_valid_manifest(path):
    manifest = load_manifest(path)
    violations = validate_manifest(manifest)
    if violations:
        lines = "; ".join(f"{v.rule}({v.entity_id})" for v in violations[:10])
        raise ValidationError(
            f"manifest has {len(violations)} violations: {lines}"
        )
    return manifest


def _concepts_of(manifest, composition):
    return [manifest.concept_by_id(cid) for cid in composition.concept_ids]


def _map_samples(fn, items, workers):
    """Run fn over items, preserving item order in the results."""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _assets_index_path(root):
    return Path(root) / "assets" / "index.json"


def stage_segment(manifest, config, backends):
    """Cut every concept reference image into a reusable asset."""
    root = config.root_path
    report = StageReport("segment")
    index_path = _assets_index_path(root)
    index = {}
    if index_path.exists():
        index = json.loads(index_path.read_text(encoding="utf-8"))
    for concept in manifest.concepts:
        for ref in concept.image_refs:
            key = f"{concept.concept_id}|{ref}"
            entry = index.get(key)
            if entry and (root / entry["cutout"]).exists():
                report.skipped.append(key)
                continue
            try:
                image = Image.open(root / ref)
                image.load()
                asset = compositor.extract_asset(
                    image,
                    backends.segmenter,
                    concept_id=concept.concept_id,
                    source_ref=ref,
                    seed=derive_seed(
                        config.seed, concept.concept_id, ref,
                        "segment", config.stage_seed("segment"),
                    ),
                )
            except Exception as e:
                report.failed.append((key, str(e)))
                log.warning("segment failed for %s: %s", key, e)
                continue
            cut_bytes = image_to_png_bytes(asset.cutout)
            mask_img = Image.fromarray(
                (asset.mask * 255).round().astype("uint8"), mode="L"
            )
            mask_bytes = image_to_png_bytes(mask_img)
            index[key] = {
                "concept_id": concept.concept_id,
                "source": ref,
                "cutout": _store_bytes(root, "assets", cut_bytes, ".png"),
                "mask": _store_bytes(root, "assets", mask_bytes, ".png"),
                "bbox": list(asset.tight_bbox),
            }
            report.produced.append(key)
    data = (json.dumps(dict(sorted(index.items())), indent=2) + "\n").encode()
    _atomic_write(index_path, data)
    return report


def _ensure_samples(manifest, config):
    """Create sample rows for every composition slot that lacks one."""
    for comp in manifest.compositions:
        for i in range(config.samples_per_composition):
            sample_id = f"{comp.composition_id}-{i:03d}"
            if manifest.sample_by_id(sample_id) is None:
                manifest.samples.append(
                    Sample(
                        sample_id=sample_id,
                        composition_id=comp.composition_id,
                        seed=derive_seed(config.seed, comp.composition_id, i),
                    )
                )


def stage_layout(manifest, config, backends):
    """Ask for a layout per sample, repair it, and apply scale ratios."""
    root = config.root_path
    report = StageReport("layout")
    _ensure_samples(manifest, config)
    for comp in manifest.compositions:
        concepts = _concepts_of(manifest, comp)
        indexed = [
            (i, manifest.sample_by_id(f"{comp.composition_id}-{i:03d}"))
            for i in range(config.samples_per_composition)
        ]
        for i, sample in indexed:
            if sample.layout_ref is not None:
                report.skipped.append(sample.sample_id)
                continue
            seed = derive_seed(sample.seed, "layout", config.stage_seed("layout"))
            try:
                lay = _generate_layout(comp, concepts, backends, seed, config)
            except Exception as e:
                report.failed.append((sample.sample_id, str(e)))
                log.warning("layout failed for %s: %s", sample.sample_id, e)
                continue
            data = (json.dumps(lay.to_dict(), indent=2) + "\n").encode()
            sample.layout_ref = _store_bytes(root, "layouts", data, ".json")
            sample.background_prompt_used = comp.background_prompts[
                i % len(comp.background_prompts)
            ]
            report.produced.append(sample.sample_id)
    return report


def _generate_layout(comp, concepts, backends, seed, config):
    system, few_shot, query = layout_mod.build_layout_prompt(comp, concepts)
    try:
        text = backends.completer.complete_text(
            system + "\n\n" + few_shot, query, seed=seed
        )
        parsed = layout_mod.parse_layout_response(text, comp, concepts)
        lay = layout_mod.validate_and_repair_layout(
            parsed, iou_threshold=config.iou_threshold
        )
    except (
        layout_mod.LayoutParseError,
        layout_mod.UnknownObject,
        layout_mod.IncompleteLayout,
    ) as e:
        log.info("layout completion unusable (%s), using grid fallback", e)
        return layout_mod.fallback_layout(comp, seed=seed)

    try:
        scale_query = layout_mod.build_scale_prompt(comp, concepts)
        scale_text = backends.completer.complete_text(
            layout_mod.scale_system_prompt(), scale_query, seed=seed
        )
        ratios = layout_mod.parse_scale_response(scale_text, comp, concepts)
        lay = layout_mod.apply_scale_ratios(
            lay, ratios, iou_threshold=config.iou_threshold
        )
    except (layout_mod.IncompleteScales, layout_mod.ScaleOutOfRange) as e:
        log.info("scale response unusable (%s), keeping unscaled layout", e)
    return lay


def _load_layout(root, sample):
    doc = json.loads((Path(root) / sample.layout_ref).read_text(encoding="utf-8"))
    return layout_mod.Layout.from_dict(doc)


def _planted_chunks(manifest, comp, sample, lay):
    """Provenance chunks stamped on composite and final images."""
    labels = []
    for b in lay.boxes:
        concept = manifest.concept_by_id(b.concept_id)
        labels.append(concept.category_label if concept else b.concept_id)
    detections = [
        {"label": label, "x": b.x, "y": b.y, "w": b.w, "h": b.h}
        for label, b in zip(labels, lay.boxes)
    ]
    return {
        "labels": ",".join(labels),
        "detections": json.dumps(detections),
        "composition": comp.composition_id,
        "background_prompt": sample.background_prompt_used or "",
        "seed": str(sample.seed),
    }


def stage_compose(manifest, config, backends):
    """Place segmented assets into each sample's layout."""
    root = config.root_path
    report = StageReport("compose")
    index_path = _assets_index_path(root)
    if not index_path.exists():
        raise StageOrderError("no segmented assets found: run segment first")
    index = json.loads(index_path.read_text(encoding="utf-8"))
    with_layout = [s for s in manifest.samples if s.layout_ref is not None]
    if not with_layout:
        raise StageOrderError("no samples carry layouts: run layout first")

    for sample in manifest.samples:
        if sample.layout_ref is None:
            report.blocked.append(sample.sample_id)
            continue
        if sample.foreground_ref is not None:
            report.skipped.append(sample.sample_id)
            continue
        comp = manifest.composition_by_id(sample.composition_id)
        concepts = _concepts_of(manifest, comp)
        lay = _load_layout(root, sample)
        try:
            assets = []
            for concept in concepts:
                rng = seeded_rng(sample.seed, "source", concept.concept_id)
                ref = concept.image_refs[int(rng.integers(len(concept.image_refs)))]
                entry = index.get(f"{concept.concept_id}|{ref}")
                if entry is None:
                    raise StageOrderError(
                        f"asset for {concept.concept_id!r} ({ref}) not segmented"
                    )
                cutout = Image.open(root / entry["cutout"])
                cutout.load()
                mask_img = Image.open(root / entry["mask"])
                mask_img.load()
                assets.append(
                    compositor.ForegroundAsset(
                        concept_id=concept.concept_id,
                        source_image_ref=entry["source"],
                        cutout=cutout,
                        mask=_mask_array(mask_img),
                        tight_bbox=tuple(entry["bbox"]),
                    )
                )
            canvas = compositor.place_foregrounds(assets, lay)
        except Exception as e:
            report.failed.append((sample.sample_id, str(e)))
            log.warning("compose failed for %s: %s", sample.sample_id, e)
            continue
        chunks = _planted_chunks(manifest, comp, sample, lay)
        fg_bytes = image_to_png_bytes(canvas.fg_image, chunks)
        sample.foreground_ref = _store_bytes(root, "images", fg_bytes, ".png")
        mask_img = Image.fromarray(
            (quantize_mask(canvas.fg_mask) * 255).round().astype("uint8"), mode="L"
        )
        sample.foreground_mask_ref = _store_bytes(
            root, "images", image_to_png_bytes(mask_img), ".png"
        )
        report.produced.append(sample.sample_id)
    return report


def _mask_array(mask_img):
    import numpy as np

    if mask_img.mode != "L":
        mask_img = mask_img.convert("L")
    return np.asarray(mask_img, dtype=np.float64) / 255.0


def _load_background_library(config):
    if not config.background_library:
        return []
    path = Path(config.config_dir) / config.background_library
    if not path.exists():
        raise ConfigError(f"background library index not found: {path}")
    doc = json.loads(path.read_text(encoding="utf-8"))
    entries = []
    for row in doc.get("backgrounds", []):
        entries.append(
            compositor.BackgroundEntry(
                bg_id=row["id"],
                image_ref=str(path.parent / row["image"]),
                tags=list(row.get("tags", [])),
            )
        )
    return entries


def stage_repaint(manifest, config, backends):
    """Blend each composite into its chosen background."""
    root = config.root_path
    report = StageReport("repaint")
    ready = [s for s in manifest.samples if s.foreground_ref is not None]
    if not ready:
        raise StageOrderError("no composites found: run compose first")
    library = _load_background_library(config)

    for sample in manifest.samples:
        if sample.foreground_ref is None:
            report.blocked.append(sample.sample_id)
            continue
        if sample.final_ref is not None:
            report.skipped.append(sample.sample_id)
            continue
        comp = manifest.composition_by_id(sample.composition_id)
        try:
            bg_ref = compositor.select_background(
                comp, sample.background_prompt_used or "", library
            )
            bg = Image.open(bg_ref)
            bg.load()
            bg = bg.convert("RGB")
            size = (comp.canvas_width, comp.canvas_height)
            if bg.size != size:
                bg = bg.resize(size, Image.Resampling.BILINEAR)
            fg = Image.open(root / sample.foreground_ref)
            fg.load()
            mask_img = Image.open(root / sample.foreground_mask_ref)
            mask_img.load()
            soft = compositor.smooth_mask(
                _mask_array(mask_img), window=config.smoothing_window
            )
            soft_q = quantize_mask(soft.values)
            final = compositor.repaint(
                compositor.CompositeCanvas(
                    fg_image=fg.convert("RGB"),
                    fg_mask=_mask_array(mask_img),
                    layout_ref=sample.layout_ref,
                ),
                compositor.SoftMask(values=soft_q, window=soft.window),
                bg,
                prompt=sample.background_prompt_used or "",
                inpainter=backends.inpainter,
                seed=derive_seed(
                    sample.seed, "repaint", config.stage_seed("repaint")
                ),
            )
        except Exception as e:
            report.failed.append((sample.sample_id, str(e)))
            log.warning("repaint failed for %s: %s", sample.sample_id, e)
            continue
        sample.background_ref = _store_bytes(
            root, "images", image_to_png_bytes(bg), ".png"
        )
        soft_img = Image.fromarray((soft_q * 255).round().astype("uint8"), mode="L")
        soft_ref = _store_bytes(root, "images", image_to_png_bytes(soft_img), ".png")
        lay = _load_layout(root, sample)
        chunks = _planted_chunks(manifest, comp, sample, lay)
        chunks["soft_mask"] = soft_ref
        sample.final_ref = _store_bytes(
            root, "images", image_to_png_bytes(final, chunks), ".png"
        )
        sample.backend_versions = backends.versions()
        report.produced.append(sample.sample_id)
    return report


def stage_caption(manifest, config, backends):
    """Template short captions plus budgeted detailed recaptions."""
    root = config.root_path
    report = StageReport("caption")
    ready = [s for s in manifest.samples if s.final_ref is not None]
    if not ready:
        raise StageOrderError("no final images found: run repaint first")

    for sample in manifest.samples:
        if sample.final_ref is None:
            report.blocked.append(sample.sample_id)
            continue
        if sample.short_caption is not None:
            report.skipped.append(sample.sample_id)
            continue
        comp = manifest.composition_by_id(sample.composition_id)
        concepts = _concepts_of(manifest, comp)
        try:
            sample.short_caption = captioning.compose_short_caption(
                concepts, sample.background_prompt_used or ""
            )
            if config.recaption_wanted(comp.composition_id):
                image = Image.open(root / sample.final_ref)
                image.load()
                text, _count, _truncated = captioning.recaption_detailed(
                    image,
                    backends.captioner,
                    backends.embedder,
                    budget=config.token_budget,
                    max_attempts=config.caption_attempts,
                    seed=derive_seed(
                        sample.seed, "caption", config.stage_seed("caption")
                    ),
                )
                sample.detailed_caption = text
        except Exception as e:
            sample.short_caption = sample.short_caption or None
            report.failed.append((sample.sample_id, str(e)))
            log.warning("caption failed for %s: %s", sample.sample_id, e)
            continue
        report.produced.append(sample.sample_id)
    return report


_STAGE_FNS = {
    "segment": stage_segment,
    "layout": stage_layout,
    "compose": stage_compose,
    "repaint": stage_repaint,
    "caption": stage_caption,
}


def run_stage(stage, config, backends=None, manifest=None):
    """Run one stage and persist the updated manifest."""
    if stage not in _STAGE_FNS:
        raise ConfigError(f"unknown stage {stage!r}; choose from {', '.join(STAGES)}")
    own_manifest = manifest is None
    if own_manifest:
        manifest = load_valid_manifest(config.manifest_path)
    if backends is None:
        backends = config.build_backends()
    report = _STAGE_FNS[stage](manifest, config, backends)
    save_manifest(manifest, config.manifest_path)
    return report


def run_all(config, backends=None):
    """All five stages in order over one manifest load."""
    manifest = load_valid_manifest(config.manifest_path)
    if backends is None:
        backends = config.build_backends()
    reports = []
    for stage in STAGES:
        reports.append(
            run_stage(stage, config, backends=backends, manifest=manifest)
        )
    return reports


def export_training_bundle(
    manifest, out_dir, root=".", repetitions=2, allow_unfinalized=False
):
    """Images plus per-image training prompts plus the category list.

    The manifest must be the finalized one (every sample ranked 4 or
    5) unless explicitly overridden.
    """
    samples = [s for s in manifest.samples if s.final_ref]
    unranked = [s for s in samples if s.rank not in (4, 5)]
    if unranked and not allow_unfinalized:
        raise NotFinalized(
            f"{len(unranked)} samples are not rank-4/5; finalize first "
            "or pass allow_unfinalized"
        )
    if not samples:
        raise EmptyBundle("no samples with final images to export")

    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    prompts = {}
    categories = set()
    for s in samples:
        comp = manifest.composition_by_id(s.composition_id)
        concepts = _concepts_of(manifest, comp)
        categories.update(c.category_label for c in concepts)
        prompt = captioning.build_training_prompt(
            comp, concepts, s.background_prompt_used or "", repetitions
        )
        filename = f"{s.sample_id}.png"
        data = (Path(root) / s.final_ref).read_bytes()
        _atomic_write(out / "images" / filename, data)
        prompts[filename] = prompt.text
    _atomic_write(
        out / "prompts.json",
        (json.dumps(prompts, indent=2, sort_keys=True) + "\n").encode(),
    )
    _atomic_write(
        out / "categories.txt", ("\n".join(sorted(categories)) + "\n").encode()
    )
    return {"images": len(samples), "out": str(out)}


def export_metrics_report(manifest, eval_file, out_path, config, backends=None):
    """Score externally generated images against the manifest's concepts.

    The eval file lists evaluations: composition id, background prompt,
    optional full prompt, and the image paths to score.  Every
    (evaluation, image) pair yields one report.
    """
    if backends is None:
        backends = config.build_backends()
    eval_path = Path(eval_file)
    try:
        doc = json.loads(eval_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"eval file not found: {eval_file}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"eval file is not valid JSON: {e}") from None
    method = doc.get("method", "default")
    evaluations = doc.get("evaluations", [])
    if not evaluations:
        raise ValidationError("eval file lists no evaluations")

    root = config.root_path
    reports = []
    for entry in evaluations:
        comp = manifest.composition_by_id(entry.get("composition_id", ""))
        if comp is None:
            raise ValidationError(
                f"eval entry references unknown composition "
                f"{entry.get('composition_id')!r}"
            )
        concepts = _concepts_of(manifest, comp)
        reference_images = {}
        for c in concepts:
            imgs = []
            for ref in c.image_refs:
                im = Image.open(root / ref)
                im.load()
                imgs.append(im)
            reference_images[c.concept_id] = imgs
        background = entry.get("background_prompt", "")
        eval_prompt = entry.get("eval_prompt") or captioning.compose_short_caption(
            concepts, background
        )
        for image_path in entry.get("images", []):
            img = Image.open(Path(eval_path.parent) / image_path)
            img.load()
            request = metrics.EvalRequest(
                generated_image=img,
                composition=comp,
                concepts=concepts,
                reference_images=reference_images,
                eval_prompt=eval_prompt,
                background_only_prompt=background,
            )
            reports.append(
                metrics.evaluate_sample(
                    request,
                    backends,
                    threshold=config.detector_threshold,
                    label_constrained=config.label_constrained_assignment,
                    use_full_prompt_ti=config.ti_clip_full_prompt,
                    sample_id=str(image_path),
                )
            )
    table = metrics.aggregate_report({method: reports})
    out = {
        "table": table,
        "samples": [metrics.report_to_dict(r) for r in reports],
    }
    _atomic_write(Path(out_path), (json.dumps(out, indent=2) + "\n").encode())
    return reports, table
