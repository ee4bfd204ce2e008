import json
from pathlib import Path

import pytest

from scenesmith.backends.base import BackendConfig
from scenesmith.backends.service import build_service
from scenesmith.cli import _STARTER_CONFIG, main
from scenesmith.errors import (
    ConfigError,
    EmptyBundle,
    NotFinalized,
    StageOrderError,
    ValidationError,
)
from scenesmith.curation import ReviewStore
from scenesmith.manifest import dumps_manifest, load_manifest
from scenesmith.pipeline import (
    STAGES,
    PipelineConfig,
    export_metrics_report,
    export_training_bundle,
    run_all,
    run_stage,
)

import helpers


# config parsing


def test_config_defaults_from_empty_doc():
    cfg = PipelineConfig.from_dict({})
    assert cfg.manifest == "manifest.json"
    assert cfg.canvas_width == 512
    assert cfg.smoothing_window == 5
    assert cfg.samples_per_composition == 4
    assert cfg.token_budget == 77
    assert cfg.recaption == "all"
    assert cfg.backends == {}


def test_config_accepts_the_cli_scaffold():
    cfg = PipelineConfig.from_dict(dict(_STARTER_CONFIG))
    assert cfg.background_library == "backgrounds/index.json"
    assert cfg.repetitions == 2


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="typo_key"):
        PipelineConfig.from_dict({"typo_key": 1})


def test_config_rejects_bad_canvas():
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"canvas": {"width": 512, "depth": 3}})
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"canvas": {"width": "512"}})


def test_config_rejects_bad_stage_seeds():
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"stage_seeds": {"render": 1}})
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"stage_seeds": {"layout": True}})
    cfg = PipelineConfig.from_dict({"stage_seeds": {"layout": 3}})
    assert cfg.stage_seed("layout") == 3
    assert cfg.stage_seed("segment") == 0


def test_config_rejects_bool_seed():
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"seed": True})


def test_config_rejects_even_smoothing_window():
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"smoothing_window": 4})
    assert PipelineConfig.from_dict({"smoothing_window": 1}).smoothing_window == 1


@pytest.mark.parametrize(
    "key", ["samples_per_composition", "token_budget", "caption_attempts", "repetitions", "workers"]
)
def test_config_rejects_nonpositive_counts(key):
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({key: 0})


def test_config_recaption_forms():
    assert PipelineConfig.from_dict({"recaption": "all"}).recaption_wanted("x")
    cfg = PipelineConfig.from_dict({"recaption": ["comp-a"]})
    assert cfg.recaption_wanted("comp-a")
    assert not cfg.recaption_wanted("comp-b")
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"recaption": 5})
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"recaption": "some"})


def test_config_rejects_bad_backend_entries():
    with pytest.raises(ConfigError, match="painter"):
        PipelineConfig.from_dict({"backends": {"painter": {"endpoint": "http://x"}}})
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict(
            {"backends": {"segmenter": {"endpoint": "http://x", "proxy": "y"}}}
        )


def test_config_paths_derive_from_config_dir(tmp_path):
    cfg = PipelineConfig.from_dict({"manifest": "m.json"}, config_dir=str(tmp_path))
    assert cfg.manifest_path == tmp_path / "m.json"
    assert cfg.root_path == tmp_path
    assert cfg.reviews_path == tmp_path / "reviews.json"
    cfg = PipelineConfig.from_dict(
        {"manifest": "m.json", "root": "data"}, config_dir=str(tmp_path)
    )
    assert cfg.root_path == tmp_path / "data"


def test_config_from_file_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        PipelineConfig.from_file(tmp_path / "none.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{nope", encoding="utf-8")
    with pytest.raises(ConfigError, match="not valid JSON"):
        PipelineConfig.from_file(bad)


def test_build_backends_defaults_to_mocks():
    cfg = PipelineConfig.from_dict({})
    assert cfg.build_backends().versions()["segmenter"] == "mock-segmenter/1"


def test_build_backends_requires_all_six():
    cfg = PipelineConfig.from_dict(
        {"backends": {"segmenter": {"endpoint": "http://x"}}}
    )
    with pytest.raises(ConfigError, match="missing"):
        cfg.build_backends()
    assert cfg.build_backends(force_mock=True).versions()["embedder"] == "mock-embedder/1"


# stage orchestration


def test_segment_builds_asset_index(tmp_path):
    cfg = helpers.build_workspace(tmp_path)
    report = run_stage("segment", cfg)
    assert report.stage == "segment"
    assert sorted(report.produced) == ["cat-1|refs/cat.png", "dog-1|refs/dog.png"]
    assert not report.failed
    index = json.loads((tmp_path / "assets" / "index.json").read_text())
    for entry in index.values():
        assert (tmp_path / entry["cutout"]).exists()
        assert (tmp_path / entry["mask"]).exists()
        assert len(entry["bbox"]) == 4
    again = run_stage("segment", cfg)
    assert again.produced == []
    assert sorted(again.skipped) == sorted(report.produced)


def test_layout_creates_samples_and_files(tmp_path):
    cfg = helpers.build_workspace(tmp_path, samples_per_composition=3)
    run_stage("layout", cfg)
    manifest = load_manifest(cfg.manifest_path)
    assert [s.sample_id for s in manifest.samples] == [
        "comp-a-000",
        "comp-a-001",
        "comp-a-002",
    ]
    for i, s in enumerate(manifest.samples):
        assert s.layout_ref and (tmp_path / s.layout_ref).exists()
        assert s.background_prompt_used == ["on the street", "in the garden"][i % 2]
        doc = json.loads((tmp_path / s.layout_ref).read_text())
        assert {b["concept_id"] for b in doc["boxes"]} == {"cat-1", "dog-1"}


def test_stage_order_is_enforced(tmp_path):
    cfg = helpers.build_workspace(tmp_path)
    with pytest.raises(StageOrderError, match="segment"):
        run_stage("compose", cfg)
    with pytest.raises(StageOrderError, match="compose"):
        run_stage("repaint", cfg)
    with pytest.raises(StageOrderError, match="repaint"):
        run_stage("caption", cfg)
    with pytest.raises(ConfigError, match="unknown stage"):
        run_stage("polish", cfg)


def test_run_all_completes_every_sample(tmp_path):
    cfg = helpers.build_workspace(
        tmp_path, composition_labels=(("cat", "dog"), ("cat", "house"))
    )
    reports = run_all(cfg)
    assert [r.stage for r in reports] == list(STAGES)
    manifest = load_manifest(cfg.manifest_path)
    assert len(manifest.samples) == 4
    for s in manifest.samples:
        for ref in (
            s.layout_ref,
            s.foreground_ref,
            s.foreground_mask_ref,
            s.background_ref,
            s.final_ref,
        ):
            assert ref and (tmp_path / ref).exists()
        assert s.short_caption.startswith("a photo of ")
        assert s.background_prompt_used in s.short_caption
        assert s.detailed_caption
        assert s.backend_versions["inpainter"] == "mock-inpainter/1"


def test_rerun_is_idempotent(tmp_path):
    cfg = helpers.build_workspace(tmp_path)
    run_all(cfg)
    before = cfg.manifest_path.read_bytes()
    digest_before = helpers.tree_digest(tmp_path)
    reports = run_all(cfg)
    for report in reports:
        assert report.produced == []
        assert report.failed == []
    assert cfg.manifest_path.read_bytes() == before
    assert helpers.tree_digest(tmp_path) == digest_before


def test_fresh_workspaces_reproduce_byte_identically(tmp_path):
    cfg_a = helpers.build_workspace(tmp_path / "a", seed=11)
    cfg_b = helpers.build_workspace(tmp_path / "b", seed=11)
    run_all(cfg_a)
    run_all(cfg_b)
    assert helpers.tree_digest(tmp_path / "a") == helpers.tree_digest(tmp_path / "b")


def test_seed_changes_outputs(tmp_path):
    cfg_a = helpers.build_workspace(tmp_path / "a", seed=11)
    cfg_b = helpers.build_workspace(tmp_path / "b", seed=12)
    run_all(cfg_a)
    run_all(cfg_b)
    a = load_manifest(cfg_a.manifest_path)
    b = load_manifest(cfg_b.manifest_path)
    assert [s.seed for s in a.samples] != [s.seed for s in b.samples]


def _manifest_modulo_versions(path):
    doc = load_manifest(path).to_dict()
    for s in doc["samples"]:
        s.pop("backend_versions")
    return doc


def test_remote_backends_match_mocks_bit_for_bit(tmp_path):
    cfg_mock = helpers.build_workspace(tmp_path / "mock", seed=5)
    run_all(cfg_mock)

    with helpers.live_server(build_service()) as url:
        cfg_remote = helpers.build_workspace(
            tmp_path / "remote",
            seed=5,
            backends={
                name: {"endpoint": url}
                for name in (
                    "segmenter",
                    "inpainter",
                    "completer",
                    "captioner",
                    "detector",
                    "embedder",
                )
            },
        )
        run_all(cfg_remote)

    assert _manifest_modulo_versions(cfg_mock.manifest_path) == (
        _manifest_modulo_versions(cfg_remote.manifest_path)
    )
    for sub in ("assets", "layouts", "images"):
        assert helpers.tree_digest(tmp_path / "mock" / sub) == (
            helpers.tree_digest(tmp_path / "remote" / sub)
        ), sub


# exports


def finished_workspace(tmp_path, **kw):
    cfg = helpers.build_workspace(tmp_path, **kw)
    run_all(cfg)
    return cfg, load_manifest(cfg.manifest_path)


def test_export_requires_finalized_ranks(tmp_path):
    cfg, manifest = finished_workspace(tmp_path)
    with pytest.raises(NotFinalized, match="finalize"):
        export_training_bundle(manifest, tmp_path / "bundle", root=tmp_path)


def test_export_allow_unfinalized_ships_everything(tmp_path):
    cfg, manifest = finished_workspace(tmp_path)
    summary = export_training_bundle(
        manifest, tmp_path / "bundle", root=tmp_path, allow_unfinalized=True
    )
    assert summary["images"] == 2
    prompts = json.loads((tmp_path / "bundle" / "prompts.json").read_text())
    assert set(prompts) == {"comp-a-000.png", "comp-a-001.png"}
    text = prompts["comp-a-000.png"]
    assert text.startswith("a photo of <myscene> scene with ")
    assert text.count("<sks0> cat") == 2
    assert text.count("<sks1> dog") == 2
    sample = manifest.samples[0]
    assert text.endswith(sample.background_prompt_used)
    cats = (tmp_path / "bundle" / "categories.txt").read_text()
    assert cats == "cat\ndog\n"
    copied = (tmp_path / "bundle" / "images" / "comp-a-000.png").read_bytes()
    assert copied == (tmp_path / sample.final_ref).read_bytes()


def test_export_after_finalize_keeps_only_kept(tmp_path):
    cfg, manifest = finished_workspace(tmp_path)
    store = ReviewStore(manifest, root=tmp_path)
    store.submit_rank("comp-a-000", 5, {}, "r1")
    store.submit_rank("comp-a-001", 2, {}, "r1")
    final = store.finalize()
    summary = export_training_bundle(final, tmp_path / "bundle", root=tmp_path)
    assert summary["images"] == 1
    assert (tmp_path / "bundle" / "images" / "comp-a-000.png").exists()
    assert not (tmp_path / "bundle" / "images" / "comp-a-001.png").exists()


def test_export_empty_bundle_raises(tmp_path):
    cfg = helpers.build_workspace(tmp_path)
    manifest = load_manifest(cfg.manifest_path)
    with pytest.raises(EmptyBundle):
        export_training_bundle(manifest, tmp_path / "bundle", root=tmp_path)


def test_export_repetitions_parameter(tmp_path):
    cfg, manifest = finished_workspace(tmp_path)
    export_training_bundle(
        manifest, tmp_path / "bundle", root=tmp_path, repetitions=3,
        allow_unfinalized=True,
    )
    text = json.loads((tmp_path / "bundle" / "prompts.json").read_text())[
        "comp-a-000.png"
    ]
    assert text.count("<sks0> cat") == 3


def eval_file_for(cfg, manifest, tmp_path, entries=None):
    if entries is None:
        entries = [
            {
                "composition_id": "comp-a",
                "background_prompt": "on the street",
                "images": [s.final_ref for s in manifest.samples],
            }
        ]
    path = tmp_path / "eval.json"
    path.write_text(
        json.dumps({"method": "ours", "evaluations": entries}, indent=2) + "\n",
        encoding="utf-8",
    )
    return path


def test_export_metrics_report_scores_listed_images(tmp_path):
    cfg, manifest = finished_workspace(tmp_path)
    eval_path = eval_file_for(cfg, manifest, tmp_path)
    out = tmp_path / "report.json"
    reports, table = export_metrics_report(manifest, eval_path, out, cfg)
    assert len(reports) == 2
    assert {r.sample_id for r in reports} == {
        s.final_ref for s in manifest.samples
    }
    for r in reports:
        assert r.n_objects == 2
        assert r.boxes_raw_count >= 1
    doc = json.loads(out.read_text())
    assert doc["table"] == table
    assert len(doc["samples"]) == 2
    assert table["rows"][0]["method"] == "ours"
    assert "<=3 objects" in table["rows"][0]["cells"]


def test_export_metrics_rejects_unknown_composition(tmp_path):
    cfg, manifest = finished_workspace(tmp_path)
    eval_path = eval_file_for(
        cfg,
        manifest,
        tmp_path,
        entries=[{"composition_id": "ghost", "background_prompt": "x", "images": []}],
    )
    with pytest.raises(ValidationError, match="ghost"):
        export_metrics_report(manifest, eval_path, tmp_path / "r.json", cfg)


def test_export_metrics_rejects_empty_and_missing_files(tmp_path):
    cfg, manifest = finished_workspace(tmp_path)
    empty = eval_file_for(cfg, manifest, tmp_path, entries=[])
    with pytest.raises(ValidationError, match="no evaluations"):
        export_metrics_report(manifest, empty, tmp_path / "r.json", cfg)
    with pytest.raises(ConfigError, match="not found"):
        export_metrics_report(manifest, tmp_path / "none.json", tmp_path / "r.json", cfg)


# command line


def test_cli_init_scaffolds_and_refuses_overwrite(tmp_path, capsys):
    out = tmp_path / "ws"
    assert main(["init", "--out", str(out)]) == 0
    assert (out / "config.json").exists()
    assert (out / "manifest.json").exists()
    assert (out / "backgrounds" / "index.json").exists()
    scaffold = json.loads((out / "config.json").read_text())
    assert PipelineConfig.from_dict(scaffold, config_dir=str(out))
    capsys.readouterr()

    assert main(["init", "--out", str(out)]) == 2
    err = capsys.readouterr().err
    assert "refusing to overwrite" in err
    assert main(["init", "--out", str(out), "--force"]) == 0


def test_cli_runs_all_stages_in_order(tmp_path, capsys):
    cfg = helpers.build_workspace(tmp_path)
    config_arg = str(tmp_path / "config.json")
    for stage in STAGES:
        assert main([stage, "-c", config_arg]) == 0
        body = json.loads(capsys.readouterr().out)
        assert body["stage"] == stage
        assert body["failed"] == []
    manifest = load_manifest(cfg.manifest_path)
    assert all(s.final_ref for s in manifest.samples)


def test_cli_maps_error_exit_codes(tmp_path, capsys):
    helpers.build_workspace(tmp_path)
    config_arg = str(tmp_path / "config.json")
    assert main(["caption", "-c", config_arg]) == 4
    assert "error:" in capsys.readouterr().err
    assert main(["segment", "-c", str(tmp_path / "nope.json")]) == 2


def test_cli_rejects_unknown_verb(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["polish"])
    assert exc.value.code == 2


def test_cli_finalize_and_export_train(tmp_path, capsys):
    cfg = helpers.build_workspace(tmp_path)
    config_arg = str(tmp_path / "config.json")
    for stage in STAGES:
        main([stage, "-c", config_arg])
    capsys.readouterr()

    assert main(["finalize", "-c", config_arg]) == 4
    assert "unranked" in capsys.readouterr().err

    manifest = load_manifest(cfg.manifest_path)
    store = ReviewStore(manifest, root=tmp_path, reviews_path=cfg.reviews_path)
    store.submit_rank("comp-a-000", 4, {}, "r1")
    store.submit_rank("comp-a-001", 1, {}, "r1")

    assert main(["finalize", "-c", config_arg]) == 0
    body = json.loads(capsys.readouterr().out)
    assert body["kept"] == 1
    final_path = Path(body["output"])
    assert final_path == tmp_path / "manifest.final.json"
    assert [s.sample_id for s in load_manifest(final_path).samples] == ["comp-a-000"]

    out_dir = tmp_path / "bundle"
    assert (
        main(
            [
                "export-train",
                "-c",
                config_arg,
                "--out",
                str(out_dir),
                "--manifest",
                str(final_path),
            ]
        )
        == 0
    )
    summary = json.loads(capsys.readouterr().out)
    assert summary["images"] == 1
    assert (out_dir / "images" / "comp-a-000.png").exists()

    assert main(["export-train", "-c", config_arg, "--out", str(out_dir)]) == 4


def test_cli_evaluate_and_stats(tmp_path, capsys):
    cfg = helpers.build_workspace(tmp_path)
    config_arg = str(tmp_path / "config.json")
    for stage in STAGES:
        main([stage, "-c", config_arg])
    capsys.readouterr()

    manifest = load_manifest(cfg.manifest_path)
    eval_path = eval_file_for(cfg, manifest, tmp_path)
    out = tmp_path / "report.json"
    assert main(["evaluate", "-c", config_arg, "--eval-file", str(eval_path), "--out", str(out)]) == 0
    body = json.loads(capsys.readouterr().out)
    assert body["reports"] == 2
    assert out.exists()

    assert main(["stats", "-c", config_arg]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["captions"]["count"] == 2
    assert stats["captions"]["mean_words"] > 0
    assert stats["ranks"] is None


def test_cli_stats_on_fresh_workspace(tmp_path, capsys):
    helpers.build_workspace(tmp_path)
    assert main(["stats", "-c", str(tmp_path / "config.json")]) == 0
    body = json.loads(capsys.readouterr().out)
    assert body == {"captions": None, "ranks": None}
