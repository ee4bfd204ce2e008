"""Command line entry points.

Exit codes: 0 success, 2 configuration problem, 3 backend failure,
4 validation failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .curation import ReviewStore, build_review_app
from .errors import ConfigError, EmptyCorpus, EmptyReportSet, SceneSmithError
from .manifest import compute_caption_stats, load_manifest, save_manifest
from .pipeline import (
    STAGES,
    PipelineConfig,
    export_metrics_report,
    export_training_bundle,
    load_valid_manifest,
    run_stage,
)

_STARTER_CONFIG = {
    "manifest": "manifest.json",
    "root": "",
    "background_library": "backgrounds/index.json",
    "canvas": {"width": 512, "height": 512},
    "smoothing_window": 5,
    "samples_per_composition": 4,
    "seed": 0,
    "stage_seeds": {},
    "detector_threshold": 0.1,
    "iou_threshold": 0.05,
    "recaption": "all",
    "token_budget": 77,
    "caption_attempts": 3,
    "repetitions": 2,
    "backends": {},
    "reviews": "reviews.json",
    "label_constrained_assignment": False,
    "ti_clip_full_prompt": False,
    "workers": 1,
}

_STARTER_MANIFEST = {
    "schema_version": "1",
    "concepts": [],
    "compositions": [],
    "samples": [],
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="scenesmith",
        description="Compose personalized concepts into curated training datasets.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", "-c", default="config.json", help="pipeline config JSON"
    )
    common.add_argument("--seed", type=int, help="override the global seed")
    common.add_argument("--workers", type=int, help="override the worker count")
    common.add_argument(
        "--mock-backends",
        action="store_true",
        help="use the deterministic in-process backends",
    )
    common.add_argument("--verbose", "-v", action="store_true")

    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("init", parents=[common], help="scaffold a workspace")
    p.add_argument("--out", default=".", help="workspace directory")
    p.add_argument("--force", action="store_true", help="overwrite existing files")

    for stage in STAGES:
        sub.add_parser(stage, parents=[common], help=f"run the {stage} stage")

    p = sub.add_parser(
        "serve-review", parents=[common], help="serve the curation HTTP API"
    )
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--ui", help="directory with a static review UI build")
    p.add_argument(
        "--finalized-out", help="where POST /finalize writes the kept manifest"
    )

    p = sub.add_parser(
        "finalize", parents=[common], help="write the manifest of kept samples"
    )
    p.add_argument("--out", help="output manifest path (default *.final.json)")
    p.add_argument(
        "--force", action="store_true", help="finalize even with unranked samples"
    )

    p = sub.add_parser(
        "export-train", parents=[common], help="export the training bundle"
    )
    p.add_argument("--out", required=True, help="bundle output directory")
    p.add_argument(
        "--manifest", help="finalized manifest to export (default: pipeline manifest)"
    )
    p.add_argument("--repetitions", type=int, help="token repetitions per prompt")
    p.add_argument("--allow-unfinalized", action="store_true")

    p = sub.add_parser(
        "evaluate", parents=[common], help="score generated images against concepts"
    )
    p.add_argument("--eval-file", required=True, help="evaluation listing JSON")
    p.add_argument("--out", help="report output path (default metrics_report.json)")

    sub.add_parser("stats", parents=[common], help="caption and rank statistics")
    return parser


def _load_config(args):
    config = PipelineConfig.from_file(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("workers must be >= 1")
        config.workers = args.workers
    return config


def _backends(config, args):
    return config.build_backends(force_mock=args.mock_backends)


def _cmd_init(args):
    out = Path(args.out)
    targets = {
        out / "config.json": json.dumps(_STARTER_CONFIG, indent=2) + "\n",
        out / "manifest.json": json.dumps(_STARTER_MANIFEST, indent=2) + "\n",
        out / "backgrounds" / "index.json": json.dumps(
            {"backgrounds": []}, indent=2
        )
        + "\n",
    }
    if not args.force:
        existing = [str(p) for p in targets if p.exists()]
        if existing:
            raise ConfigError(
                f"refusing to overwrite {', '.join(existing)} (use --force)"
            )
    for path, text in targets.items():
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        print(f"wrote {path}")
    return 0


def _cmd_stage(args):
    config = _load_config(args)
    report = run_stage(args.verb, config, backends=_backends(config, args))
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def _cmd_serve_review(args):
    import uvicorn

    config = _load_config(args)
    manifest = load_valid_manifest(config.manifest_path)
    store = ReviewStore(
        manifest, root=config.root_path, reviews_path=config.reviews_path
    )
    finalized = args.finalized_out or str(
        config.manifest_path.with_suffix(".final.json")
    )
    app = build_review_app(store, static_dir=args.ui, finalize_path=finalized)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _cmd_finalize(args):
    config = _load_config(args)
    manifest = load_valid_manifest(config.manifest_path)
    store = ReviewStore(
        manifest, root=config.root_path, reviews_path=config.reviews_path
    )
    final = store.finalize(force=args.force)
    out = Path(args.out) if args.out else config.manifest_path.with_suffix(
        ".final.json"
    )
    save_manifest(final, out)
    print(
        json.dumps(
            {
                "kept": len(final.samples),
                "total": len(store.reviewable_samples()),
                "output": str(out),
            },
            indent=2,
        )
    )
    return 0


def _cmd_export_train(args):
    config = _load_config(args)
    path = Path(args.manifest) if args.manifest else config.manifest_path
    manifest = load_manifest(path)
    summary = export_training_bundle(
        manifest,
        args.out,
        root=config.root_path,
        repetitions=args.repetitions or config.repetitions,
        allow_unfinalized=args.allow_unfinalized,
    )
    print(json.dumps(summary, indent=2))
    return 0


def _cmd_evaluate(args):
    config = _load_config(args)
    manifest = load_valid_manifest(config.manifest_path)
    out = args.out or str(config.root_path / "metrics_report.json")
    reports, table = export_metrics_report(
        manifest, args.eval_file, out, config, backends=_backends(config, args)
    )
    print(json.dumps({"reports": len(reports), "output": out, "table": table}, indent=2))
    return 0


def _cmd_stats(args):
    config = _load_config(args)
    manifest = load_valid_manifest(config.manifest_path)
    body = {"captions": None, "ranks": None}
    try:
        stats = compute_caption_stats(manifest)
        body["captions"] = {
            "count": stats.count,
            "mean_words": stats.mean_words,
            "fraction_over_20": stats.fraction_over_20,
            "histogram": stats.histogram,
        }
    except EmptyCorpus:
        pass
    store = ReviewStore(
        manifest, root=config.root_path, reviews_path=config.reviews_path
    )
    try:
        body["ranks"] = store.rank_distribution()
    except EmptyReportSet:
        pass
    print(json.dumps(body, indent=2))
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handlers = {
        "init": _cmd_init,
        "serve-review": _cmd_serve_review,
        "finalize": _cmd_finalize,
        "export-train": _cmd_export_train,
        "evaluate": _cmd_evaluate,
        "stats": _cmd_stats,
    }
    handler = handlers.get(args.verb, _cmd_stage)
    try:
        return handler(args)
    except SceneSmithError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
