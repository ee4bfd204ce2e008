"""Human review queue and dataset finalization.

Reviewers pull items, rank them 1 to 5 against three advisory
criteria, and only ranks 4 and 5 survive into the finalized manifest.
Rank submissions append to a JSON sidecar so a crashed server loses
nothing.  The HTTP surface here is the only contract the review UI
knows about.
"""

from __future__ import annotations

import json
import statistics
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from fastapi import FastAPI, Header, Request
from fastapi.responses import FileResponse, JSONResponse

from .errors import (
    EmptyReportSet,
    IncompleteReview,
    NotFound,
    ValidationError,
)
from .manifest import Manifest

CRITERIA = ("concepts_present", "placement_reasonable", "artifact_free")

LEASE_SECONDS = 300.0


@dataclass
class ReviewItem:
    sample_id: str
    image_ref: str
    short_caption: str
    labels: list[str]
    concept_count: int
    status: str = "pending"

    def to_dict(self):
        return {
            "sample_id": self.sample_id,
            "image_ref": self.image_ref,
            "short_caption": self.short_caption,
            "labels": list(self.labels),
            "concept_count": self.concept_count,
            "status": self.status,
        }


@dataclass
class RankRecord:
    sample_id: str
    rank: int
    criteria: dict
    reviewer: str
    timestamp: float
    seq: int = 0

    def to_dict(self):
        return {
            "sample_id": self.sample_id,
            "rank": self.rank,
            "criteria": dict(self.criteria),
            "reviewer": self.reviewer,
            "timestamp": self.timestamp,
            "seq": self.seq,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            sample_id=d["sample_id"],
            rank=d["rank"],
            criteria=dict(d.get("criteria", {})),
            reviewer=d["reviewer"],
            timestamp=d["timestamp"],
            seq=d.get("seq", 0),
        )


class ReviewStore:
    """Queue state, rank records, and finalize logic.

    Samples with a final image are reviewable.  A sample handed to one
    reviewer is leased for a while so two reviewers are not shown the
    same pending item at once.
    """

    def __init__(self, manifest, root=".", reviews_path=None,
                 lease_seconds=LEASE_SECONDS, clock=time.time):
        self.manifest = manifest
        self.root = Path(root)
        self.reviews_path = Path(reviews_path) if reviews_path else None
        self.lease_seconds = lease_seconds
        self.clock = clock
        self.records = []
        self._leases = {}
        self._seq = 0
        self._lock = threading.Lock()
        if self.reviews_path and self.reviews_path.exists():
            doc = json.loads(self.reviews_path.read_text(encoding="utf-8"))
            self.records = [RankRecord.from_dict(r) for r in doc.get("records", [])]
            self._seq = max((r.seq for r in self.records), default=0)

    def reviewable_samples(self):
        return [s for s in self.manifest.samples if s.final_ref]

    def _labels_for(self, sample):
        comp = self.manifest.composition_by_id(sample.composition_id)
        if comp is None:
            return [], 0
        labels = []
        for cid in comp.concept_ids:
            concept = self.manifest.concept_by_id(cid)
            labels.append(concept.category_label if concept else cid)
        return labels, len(comp.concept_ids)

    def item_for(self, sample):
        labels, count = self._labels_for(sample)
        ranked = bool(self.ranks_for(sample.sample_id)) or sample.rank is not None
        return ReviewItem(
            sample_id=sample.sample_id,
            image_ref=sample.final_ref,
            short_caption=sample.short_caption or "",
            labels=labels,
            concept_count=count,
            status="ranked" if ranked else "pending",
        )

    def ranks_for(self, sample_id):
        """Effective rank per reviewer: the latest record wins."""
        latest = {}
        for r in self.records:
            if r.sample_id != sample_id:
                continue
            held = latest.get(r.reviewer)
            if held is None or r.seq > held.seq:
                latest[r.reviewer] = r
        return {rev: rec.rank for rev, rec in latest.items()}

    def effective_rank(self, sample):
        """Median reviewer rank, even splits rounded down.

        A rank already stored on the sample counts when no reviewer
        records exist, which is what makes finalize idempotent.
        """
        ranks = self.ranks_for(sample.sample_id)
        if ranks:
            return statistics.median_low(sorted(ranks.values()))
        return sample.rank

    def next_item(self, reviewer):
        """First sample this reviewer has not ranked and nobody holds."""
        with self._lock:
            now = self.clock()
            for sample in self.reviewable_samples():
                if reviewer in self.ranks_for(sample.sample_id):
                    continue
                if sample.rank is not None and not self.ranks_for(sample.sample_id):
                    continue
                holder = self._leases.get(sample.sample_id)
                if holder and holder[0] != reviewer and holder[1] > now:
                    continue
                self._leases[sample.sample_id] = (reviewer, now + self.lease_seconds)
                return self.item_for(sample)
            return None

    def submit_rank(self, sample_id, rank, criteria, reviewer):
        if not isinstance(rank, int) or not 1 <= rank <= 5:
            raise ValidationError(f"rank must be an integer in 1..5, got {rank!r}")
        sample = self.manifest.sample_by_id(sample_id)
        if sample is None or not sample.final_ref:
            raise NotFound(f"no reviewable sample {sample_id!r}")
        flags = {k: bool(criteria.get(k, False)) for k in CRITERIA}
        with self._lock:
            self._seq += 1
            record = RankRecord(
                sample_id=sample_id,
                rank=rank,
                criteria=flags,
                reviewer=reviewer,
                timestamp=self.clock(),
                seq=self._seq,
            )
            self.records.append(record)
            self._leases.pop(sample_id, None)
            self._persist()
        return record

    def _persist(self):
        if not self.reviews_path:
            return
        doc = {"records": [r.to_dict() for r in self.records]}
        tmp = self.reviews_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        tmp.replace(self.reviews_path)

    def progress(self):
        samples = self.reviewable_samples()
        ranked = sum(1 for s in samples if self.effective_rank(s) is not None)
        return {"total": len(samples), "ranked": ranked, "remaining": len(samples) - ranked}

    def finalize(self, force=False):
        """Manifest containing exactly the rank-4/5 samples.

        Kept samples get their effective rank written into the rank
        field; everything else about them stays untouched.
        """
        unranked = [
            s.sample_id
            for s in self.reviewable_samples()
            if self.effective_rank(s) is None
        ]
        if unranked and not force:
            raise IncompleteReview(
                f"{len(unranked)} samples still unranked: {', '.join(unranked[:5])}"
            )
        kept = []
        for s in self.reviewable_samples():
            rank = self.effective_rank(s)
            if rank in (4, 5):
                kept.append(replace(s, rank=rank, backend_versions=dict(s.backend_versions)))
        return Manifest(
            schema_version=self.manifest.schema_version,
            concepts=list(self.manifest.concepts),
            compositions=list(self.manifest.compositions),
            samples=kept,
        )

    def rank_distribution(self):
        """Counts and percentages per concept-count group and rank."""
        grouped = {}
        for s in self.reviewable_samples():
            rank = self.effective_rank(s)
            if rank is None:
                continue
            _, count = self._labels_for(s)
            if count <= 3:
                label = "<=3 concepts"
            elif count == 4:
                label = "4 concepts"
            else:
                label = "5 concepts"
            grouped.setdefault(label, []).append(rank)
        if not grouped:
            raise EmptyReportSet("no ranked samples to tabulate")
        rows = []
        for label in ("<=3 concepts", "4 concepts", "5 concepts"):
            if label not in grouped:
                continue
            ranks = grouped[label]
            counts = {str(r): ranks.count(r) for r in range(1, 6)}
            total = len(ranks)
            rows.append(
                {
                    "group": label,
                    "counts": counts,
                    "percentages": {
                        k: round(100.0 * v / total, 1) for k, v in counts.items()
                    },
                    "total": total,
                }
            )
        return {"rows": rows}


def build_review_app(store, static_dir=None, finalize_path=None):
    """The review HTTP API, plus the static UI when a build is given."""
    from .manifest import save_manifest

    app = FastAPI(title="scenesmith review")

    @app.exception_handler(NotFound)
    def _not_found(request: Request, exc: NotFound):
        return JSONResponse(status_code=404, content={"error": str(exc)})

    @app.exception_handler(IncompleteReview)
    def _incomplete(request: Request, exc: IncompleteReview):
        return JSONResponse(status_code=409, content={"error": str(exc)})

    @app.exception_handler(ValidationError)
    def _invalid(request: Request, exc: ValidationError):
        return JSONResponse(status_code=422, content={"error": str(exc)})

    @app.get("/queue/next")
    def queue_next(x_reviewer_id: str = Header(...)):
        item = store.next_item(x_reviewer_id)
        body = store.progress()
        if item is None:
            body["done"] = True
            body["item"] = None
        else:
            body["done"] = False
            body["item"] = item.to_dict()
        return body

    @app.post("/rank")
    def rank(payload: dict, x_reviewer_id: str = Header(...)):
        record = store.submit_rank(
            payload.get("sample_id", ""),
            payload.get("rank"),
            payload.get("criteria", {}),
            x_reviewer_id,
        )
        body = store.progress()
        body["ok"] = True
        body["sample_id"] = record.sample_id
        return body

    @app.post("/finalize")
    def finalize(payload: dict = None):
        payload = payload or {}
        final = store.finalize(force=bool(payload.get("force", False)))
        out = None
        if finalize_path:
            save_manifest(final, finalize_path)
            out = str(finalize_path)
        return {
            "kept": len(final.samples),
            "total": len(store.reviewable_samples()),
            "output": out,
            "sample_ids": [s.sample_id for s in final.samples],
        }

    @app.get("/stats/ranks")
    def stats():
        try:
            return store.rank_distribution()
        except EmptyReportSet:
            return {"rows": []}

    @app.get("/image/{sample_id}")
    def image(sample_id: str):
        sample = store.manifest.sample_by_id(sample_id)
        if sample is None or not sample.final_ref:
            raise NotFound(f"no image for sample {sample_id!r}")
        path = store.root / sample.final_ref
        if not path.exists():
            raise NotFound(f"image file missing for {sample_id!r}")
        return FileResponse(path)

    if static_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
