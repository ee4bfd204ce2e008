"""Shared builders for tests: workspaces, images, live servers."""

import json
import socket
import threading
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
from PIL import Image

from scenesmith.manifest import Composition, Concept, Manifest, save_manifest
from scenesmith.pipeline import PipelineConfig

PALETTE = {
    "cat": (200, 120, 40),
    "dog": (40, 120, 200),
    "car": (90, 90, 90),
    "house": (160, 60, 60),
    "sheep": (230, 230, 220),
    "person": (220, 170, 130),
    "plant": (40, 160, 60),
}


def write_concept_image(path, label, size=96, inset=8):
    """Opaque colored square on a transparent field."""
    color = PALETTE.get(label, (128, 128, 128))
    rgba = np.zeros((size, size, 4), np.uint8)
    rgba[inset:-inset, inset:-inset, :3] = color
    rgba[inset:-inset, inset:-inset, 3] = 255
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(rgba, "RGBA").save(path)
    return path


def write_background_image(path, color=(30, 90, 30), size=(512, 512)):
    arr = np.zeros((size[1], size[0], 3), np.uint8)
    arr[:] = color
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr, "RGB").save(path)
    return path


def build_workspace(
    root,
    composition_labels=(("cat", "dog"),),
    samples_per_composition=2,
    seed=7,
    background_prompts=("on the street", "in the garden"),
    canvas=(512, 512),
    **config_overrides,
):
    """A ready-to-run workspace: refs, backgrounds, manifest, config.

    ``composition_labels`` is a tuple of label tuples, one per
    composition.  Concepts are shared across compositions when labels
    repeat.  Returns the PipelineConfig.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)

    labels = []
    for group in composition_labels:
        for label in group:
            if label not in labels:
                labels.append(label)
    concepts = []
    for label in labels:
        write_concept_image(root / f"refs/{label}.png", label)
        concepts.append(
            Concept(
                concept_id=f"{label}-1",
                category_label=label,
                rare_token=f"<sks{labels.index(label)}>",
                image_refs=[f"refs/{label}.png"],
            )
        )

    compositions = []
    for i, group in enumerate(composition_labels):
        compositions.append(
            Composition(
                composition_id=f"comp-{chr(ord('a') + i)}",
                concept_ids=[f"{label}-1" for label in group],
                background_prompts=list(background_prompts),
                canvas_width=canvas[0],
                canvas_height=canvas[1],
                global_token="<myscene>",
            )
        )

    manifest = Manifest(
        schema_version="1",
        concepts=concepts,
        compositions=compositions,
        samples=[],
    )
    save_manifest(manifest, root / "manifest.json")

    write_background_image(root / "bg/street.png", (30, 90, 30))
    write_background_image(root / "bg/garden.png", (120, 160, 80))
    (root / "backgrounds.json").write_text(
        json.dumps(
            {
                "backgrounds": [
                    {"id": "bg-street", "image": "bg/street.png",
                     "tags": ["street", "suburbs"]},
                    {"id": "bg-garden", "image": "bg/garden.png",
                     "tags": ["garden", "countryside"]},
                ]
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )

    doc = {
        "manifest": "manifest.json",
        "background_library": "backgrounds.json",
        "samples_per_composition": samples_per_composition,
        "seed": seed,
    }
    doc.update(config_overrides)
    (root / "config.json").write_text(
        json.dumps(doc, indent=2) + "\n", encoding="utf-8"
    )
    return PipelineConfig.from_dict(doc, config_dir=str(root))


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@contextmanager
def live_server(app):
    """Serve an ASGI app on a real socket for the duration of a test."""
    import uvicorn

    port = free_port()
    config = uvicorn.Config(app, host="127.0.0.1", port=port, log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("server did not start in time")
        time.sleep(0.01)
    try:
        yield f"http://127.0.0.1:{port}"
    finally:
        server.should_exit = True
        thread.join(timeout=10)


def unit(values):
    v = np.asarray(values, dtype=np.float64)
    return v / np.linalg.norm(v)


def random_unit(rng, dim):
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def tree_digest(root):
    """Stable digest of every file under root (paths and bytes)."""
    import hashlib

    h = hashlib.sha256()
    root = Path(root)
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        h.update(str(path.relative_to(root)).encode())
        h.update(path.read_bytes())
    return h.hexdigest()
