"""Shared fixtures: tiny on-disk CSLR corpora and scene catalogs."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from slrobust import media


def make_cslr(root: Path, n_videos: int, n_frames: int = 2, size: int = 8, mask_value: float | None = None, seed: int = 0) -> Path:
    """Write ``n_videos`` clips with masks and a JSON Lines manifest; returns the manifest path."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n_videos):
        vid = f"vid{i:03d}"
        frames = rng.uniform(0, 1, (n_frames, size, size, 3))
        media.save_video_dir(root / "frames" / vid, frames)
        mdir = root / "masks" / vid
        mdir.mkdir(parents=True)
        for t in range(n_frames):
            if mask_value is None:
                m = np.zeros((size, size))
                m[size // 4 : 3 * size // 4, size // 4 : 3 * size // 4] = 1.0
            else:
                m = np.full((size, size), mask_value)
            media.save_mask(mdir / media.frame_name(t), m)
        rows.append({"video_id": vid, "frames_dir": f"frames/{vid}", "mask_dir": f"masks/{vid}", "glosses": ["A", "B"]})
    path = root / "manifest.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    return path


def make_scenes(root: Path, n_classes: int, per_class: int = 3, size: int = 6, seed: int = 1) -> Path:
    rng = np.random.default_rng(seed)
    for c in range(n_classes):
        d = root / f"c{c}"
        d.mkdir(parents=True)
        for k in range(per_class):
            media.save_frame(d / f"img{k}.png", rng.uniform(0, 1, (size, size, 3)))
    return root


@pytest.fixture
def cslr20(tmp_path):
    return make_cslr(tmp_path / "cslr", 20)


@pytest.fixture
def scenes10(tmp_path):
    return make_scenes(tmp_path / "scenes", 10)


def tree_bytes(root: Path) -> dict[str, bytes]:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}
