"""Composition-personalization scoring.

For every detected box: embed its crop, score it against each
concept's reference-image embeddings (mean of dot products), assign it
to the best-scoring concept, keep only the best box per concept, and
average the survivors over the number of concepts the scene was
supposed to contain.  Missing objects therefore pull the score down;
extra detections never do.  The text-image score compares the whole
image against the background-only prompt, so holding it steady while
the composition score climbs is the signal that a model is not
overfitting to backgrounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyReportSet, PreconditionError

GOOD_SCORE = 0.5
CROSS_VIEW_CEILING = (0.6, 0.7)

GROUP_LABELS = ("<=3 objects", "4 objects", "5 objects")


def object_count_group(n):
    if n <= 3:
        return GROUP_LABELS[0]
    if n == 4:
        return GROUP_LABELS[1]
    return GROUP_LABELS[2]


@dataclass
class EvalRequest:
    """One generated image plus everything needed to judge it."""

    generated_image: object
    composition: object
    concepts: list
    reference_images: dict
    eval_prompt: str
    background_only_prompt: str

    def __post_init__(self):
        if not self.eval_prompt.strip():
            raise PreconditionError("eval_prompt must be non-empty")
        if not self.background_only_prompt.strip():
            raise PreconditionError("background_only_prompt must be non-empty")


@dataclass
class ObjectAssignment:
    box: object
    box_index: int
    assigned_concept: str
    score: float
    per_concept_scores: dict


@dataclass
class MetricReport:
    cp_clip: float
    ti_clip: float
    ti_clip_background: float
    ti_clip_full_prompt: float
    assignments: list
    missing_concepts: list
    boxes_raw_count: int
    n_objects: int
    good: bool
    sample_id: str = ""


def _vec(embedding):
    values = getattr(embedding, "values", embedding)
    return np.asarray(values, dtype=np.float64)


def detect_boxes(request, detector, threshold=0.1):
    """Query the detector with the composition's category labels."""
    queries = []
    for c in request.concepts:
        if c.category_label not in queries:
            queries.append(c.category_label)
    return detector.detect_objects(
        request.generated_image, queries, threshold=threshold
    )


def score_box(box_embedding, reference_embeddings):
    """Mean dot product of the box crop against one reference set."""
    if not reference_embeddings:
        raise PreconditionError("reference embedding set is empty")
    b = _vec(box_embedding)
    total = 0.0
    for ref in reference_embeddings:
        total += float(np.dot(b, _vec(ref)))
    return total / len(reference_embeddings)


def score_matrix(box_embeddings, reference_sets, concepts, boxes=None,
                 label_constrained=False):
    """Per-box maps of concept_id -> score.

    With ``label_constrained`` a box is only scored against concepts
    sharing its detector label; by default every concept competes for
    every box.
    """
    rows = []
    for i, emb in enumerate(box_embeddings):
        row = {}
        for c in concepts:
            if label_constrained and boxes is not None:
                if c.category_label != boxes[i].label:
                    continue
            row[c.concept_id] = score_box(emb, reference_sets[c.concept_id])
        rows.append(row)
    return rows


def assign_and_dedup(boxes, per_box_scores, concepts):
    """Argmax assignment then one-box-per-concept dedup.

    Each box goes to its best-scoring concept (ties: first in
    composition order).  When several boxes claim the same concept,
    the highest-scoring box survives (ties: smaller box index).
    Survivors come back in composition order.
    """
    order = [c.concept_id for c in concepts]
    assignments = []
    for i, (box, scores) in enumerate(zip(boxes, per_box_scores)):
        if not scores:
            continue
        best = None
        for cid in order:
            if cid not in scores:
                continue
            if best is None or scores[cid] > scores[best]:
                best = cid
        assignments.append(
            ObjectAssignment(
                box=box,
                box_index=i,
                assigned_concept=best,
                score=scores[best],
                per_concept_scores=dict(scores),
            )
        )

    survivors = {}
    for a in assignments:
        held = survivors.get(a.assigned_concept)
        if held is None or a.score > held.score:
            survivors[a.assigned_concept] = a
    return [survivors[cid] for cid in order if cid in survivors]


def cp_clip(assignments, composition):
    """Sum of surviving scores over the composition's concept count."""
    k = len(composition.concept_ids)
    if k == 0:
        raise PreconditionError("composition has no concepts")
    if not assignments:
        return 0.0
    total = 0.0
    for a in assignments:
        total += a.score
    return total / k


def ti_clip(request, embedder, use_full_prompt=False):
    """Dot of the image embedding and the prompt embedding."""
    text = request.eval_prompt if use_full_prompt else request.background_only_prompt
    img = _vec(embedder.embed_image(request.generated_image))
    txt = _vec(embedder.embed_text(text))
    return float(np.dot(img, txt))


def _crop_box(image, box):
    x0 = max(0, int(round(box.x)))
    y0 = max(0, int(round(box.y)))
    x1 = min(image.width, max(x0 + 1, int(round(box.x + box.w))))
    y1 = min(image.height, max(y0 + 1, int(round(box.y + box.h))))
    return image.crop((x0, y0, x1, y1))


def evaluate_sample(
    request,
    backends,
    threshold=0.1,
    label_constrained=False,
    use_full_prompt_ti=False,
    sample_id="",
):
    """Full per-image scoring pass: detect, crop, embed, score, assign."""
    boxes = detect_boxes(request, backends.detector, threshold=threshold)
    reference_sets = {
        c.concept_id: [
            backends.embedder.embed_image(img)
            for img in request.reference_images[c.concept_id]
        ]
        for c in request.concepts
    }
    box_embeddings = [
        backends.embedder.embed_image(_crop_box(request.generated_image, b))
        for b in boxes
    ]
    rows = score_matrix(
        box_embeddings,
        reference_sets,
        request.concepts,
        boxes=boxes,
        label_constrained=label_constrained,
    )
    assignments = assign_and_dedup(boxes, rows, request.concepts)
    score = cp_clip(assignments, request.composition)
    ti_background = ti_clip(request, backends.embedder, use_full_prompt=False)
    ti_full = ti_clip(request, backends.embedder, use_full_prompt=True)
    assigned = {a.assigned_concept for a in assignments}
    return MetricReport(
        cp_clip=score,
        ti_clip=ti_full if use_full_prompt_ti else ti_background,
        ti_clip_background=ti_background,
        ti_clip_full_prompt=ti_full,
        assignments=assignments,
        missing_concepts=[
            c.concept_id for c in request.concepts if c.concept_id not in assigned
        ],
        boxes_raw_count=len(boxes),
        n_objects=len(request.concepts),
        good=score >= GOOD_SCORE,
        sample_id=sample_id,
    )


def aggregate_report(reports_by_method):
    """Table of per-group mean scores, one row per method tag.

    Groups follow the object-count split (<=3, 4, 5); cells hold mean
    CP-CLIP, mean TI-CLIP, and the sample count.
    """
    if not reports_by_method or not any(reports_by_method.values()):
        raise EmptyReportSet("no reports to aggregate")
    rows = []
    for method, reports in reports_by_method.items():
        cells = {}
        for label in GROUP_LABELS:
            group = [r for r in reports if object_count_group(r.n_objects) == label]
            if not group:
                continue
            mean_cp = sum(r.cp_clip for r in group) / len(group)
            cells[label] = {
                "cp_clip": mean_cp,
                "ti_clip": sum(r.ti_clip for r in group) / len(group),
                "count": len(group),
                "good": mean_cp >= GOOD_SCORE,
            }
        rows.append({"method": method, "cells": cells})
    return {"groups": list(GROUP_LABELS), "rows": rows}


def report_to_dict(report):
    """Audit record for one sample, JSON-shaped."""
    return {
        "sample_id": report.sample_id,
        "cp_clip": report.cp_clip,
        "ti_clip": report.ti_clip,
        "ti_clip_background": report.ti_clip_background,
        "ti_clip_full_prompt": report.ti_clip_full_prompt,
        "good": report.good,
        "n_objects": report.n_objects,
        "boxes_raw_count": report.boxes_raw_count,
        "missing_concepts": list(report.missing_concepts),
        "assignments": [
            {
                "box_index": a.box_index,
                "label": a.box.label,
                "assigned_concept": a.assigned_concept,
                "score": a.score,
                "per_concept_scores": dict(a.per_concept_scores),
            }
            for a in report.assignments
        ],
    }
