"""Background-shift benchmark generation.

Every video of a CSLR manifest is assigned one scene image and its frames are
matted onto that scene with the per-frame person masks.  Scene classes are
spread uniformly over the videos, and all randomness is derived from stable
per-video seeds so results do not depend on worker count or ordering.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import media
from .media import SceneImage

log = logging.getLogger(__name__)

Catalog = Mapping[str, Sequence[SceneImage]]

__all__ = [
    "BenchmarkConfig",
    "BenchmarkError",
    "CslrEntry",
    "SampleRecord",
    "SubsetPool",
    "assign_scene",
    "derive_seed",
    "generate_benchmark",
    "generate_split",
    "load_cslr_manifest",
    "load_scene_catalog",
    "select_scene_subset",
    "select_training_pool",
    "write_jsonl",
]


class BenchmarkError(ValueError):
    """Invalid benchmark inputs (missing masks, bad manifest rows, ...)."""


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from an arbitrary tuple of ints/strings."""
    key = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


@dataclass
class SampleRecord:
    video_id: str
    frames_dir: str
    mask_dir: str | None
    glosses: list[str]
    scene_class: str
    scene_image_id: str
    split_id: int
    seed: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, ensure_ascii=False)


@dataclass
class CslrEntry:
    video_id: str
    frames_dir: Path
    mask_dir: Path | None
    glosses: list[str]


@dataclass
class BenchmarkConfig:
    master_seed: int = 0
    n_splits: int = 3
    k_per_class: int = 1
    first_split: int = 0
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.n_splits < 1:
            raise ValueError("n_splits must be >= 1")
        if self.k_per_class < 1:
            raise ValueError("k_per_class must be >= 1")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    @property
    def split_ids(self) -> range:
        return range(self.first_split, self.first_split + self.n_splits)


def _check_catalog(catalog: Catalog) -> list[str]:
    if not catalog:
        raise BenchmarkError("scene catalog is empty")
    for cls, items in catalog.items():
        if not items:
            raise BenchmarkError(f"scene class {cls!r} has no images")
    return sorted(catalog)


def _draw(items: Sequence[SceneImage], count: int, rng: np.random.Generator, cls: str) -> list[SceneImage]:
    replace = len(items) < count
    if replace:
        log.warning("scene class %r has %d images, %d requested; sampling with replacement", cls, len(items), count)
    idx = rng.choice(len(items), size=count, replace=replace)
    return [items[i] for i in idx]


def select_scene_subset(catalog: Catalog, n_videos: int, rng: np.random.Generator) -> list[SceneImage]:
    """Pick ``n_videos`` scene images with class counts differing by at most one.

    The ``n_videos % C`` classes that receive an extra image are chosen at
    random.  Images are drawn without replacement while a class allows it.
    """
    if n_videos < 1:
        raise BenchmarkError("need at least one video")
    classes = _check_catalog(catalog)
    base, rem = divmod(n_videos, len(classes))
    counts = np.full(len(classes), base)
    counts[rng.choice(len(classes), size=rem, replace=False)] += 1
    subset = []
    for cls, count in zip(classes, counts):
        if count:
            subset += _draw(catalog[cls], int(count), rng, cls)
    return subset


def select_training_pool(catalog: Catalog, k: int, rng: np.random.Generator) -> list[SceneImage]:
    """Exactly ``k`` images per scene class for background randomization."""
    if k < 1:
        raise BenchmarkError("K must be >= 1")
    pool = []
    for cls in _check_catalog(catalog):
        pool += _draw(catalog[cls], k, rng, cls)
    return pool


class SubsetPool:
    """Unassigned entries of a scene subset, grouped by class."""

    def __init__(self, subset: Iterable[SceneImage]):
        self.remaining: dict[str, list[SceneImage]] = {}
        for scene in subset:
            self.remaining.setdefault(scene.class_label, []).append(scene)

    def __len__(self) -> int:
        return sum(len(v) for v in self.remaining.values())


def assign_scene(video_id: str, pool: SubsetPool, rng: np.random.Generator) -> SceneImage:
    """Draw a scene class at random, then one of its images; the image is consumed."""
    classes = sorted(c for c, v in pool.remaining.items() if v)
    if not classes:
        raise BenchmarkError(f"scene subset exhausted before video {video_id!r}")
    cls = classes[int(rng.integers(len(classes)))]
    entries = pool.remaining[cls]
    return entries.pop(int(rng.integers(len(entries))))


# -- I/O --------------------------------------------------------------------


def _resolve(base: Path, value: str | None) -> Path | None:
    if value is None:
        return None
    p = Path(value)
    return p if p.is_absolute() else base / p


def _check_video_id(video_id: str) -> None:
    if not video_id or "/" in video_id or "\\" in video_id or video_id in (".", ".."):
        raise BenchmarkError(f"invalid video id {video_id!r}")


def load_cslr_manifest(path: str | Path) -> list[CslrEntry]:
    """Read a JSON Lines manifest; relative paths resolve against its directory."""
    path = Path(path)
    base = path.parent
    entries = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                video_id = str(row["video_id"])
                glosses = row["glosses"]
                if isinstance(glosses, str):
                    glosses = glosses.split()
                entry = CslrEntry(video_id, _resolve(base, row["frames_dir"]), _resolve(base, row.get("mask_dir")), list(glosses))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise BenchmarkError(f"{path}:{lineno}: bad manifest row ({exc})") from exc
            _check_video_id(video_id)
            if video_id in seen:
                raise BenchmarkError(f"{path}:{lineno}: duplicate video id {video_id!r}")
            seen.add(video_id)
            entries.append(entry)
    return entries


def load_scene_catalog(path: str | Path) -> dict[str, list[SceneImage]]:
    """Load a ``<class>/<image>.png`` tree or a JSON Lines index.

    Index rows carry ``{"id", "class_label", "path"}``; paths are relative
    to the index file.  Pixels are read lazily.
    """
    path = Path(path)
    catalog: dict[str, list[SceneImage]] = {}
    if path.is_dir():
        for cls_dir in sorted(p for p in path.iterdir() if p.is_dir()):
            for img in media.list_frames(cls_dir):
                catalog.setdefault(cls_dir.name, []).append(SceneImage(f"{cls_dir.name}/{img.stem}", cls_dir.name, path=img))
    else:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    row = json.loads(line)
                    scene = SceneImage(str(row["id"]), str(row["class_label"]), path=_resolve(path.parent, row["path"]))
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise BenchmarkError(f"{path}:{lineno}: bad catalog row ({exc})") from exc
                catalog.setdefault(scene.class_label, []).append(scene)
        for items in catalog.values():
            items.sort(key=lambda s: s.id)
    if not catalog:
        raise BenchmarkError(f"no scene images found under {path}")
    return catalog


def write_jsonl(path: str | Path, rows: Iterable[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(row + "\n")


# -- generation -------------------------------------------------------------


def _mask_paths(entry: CslrEntry, n_frames: int) -> list[Path]:
    if entry.mask_dir is None:
        raise BenchmarkError(f"video {entry.video_id!r}: no mask directory")
    if not entry.mask_dir.is_dir():
        raise BenchmarkError(f"video {entry.video_id!r}: mask directory {entry.mask_dir} not found")
    masks = media.list_frames(entry.mask_dir)
    if len(masks) < n_frames:
        raise BenchmarkError(f"video {entry.video_id!r}: missing mask for frame index {len(masks)} (have {len(masks)} masks for {n_frames} frames)")
    return masks[:n_frames]


def _inputs(entry: CslrEntry) -> tuple[list[Path], list[Path]]:
    if not entry.frames_dir.is_dir():
        raise BenchmarkError(f"video {entry.video_id!r}: frames directory {entry.frames_dir} not found")
    frames = media.list_frames(entry.frames_dir)
    if not frames:
        raise BenchmarkError(f"video {entry.video_id!r}: no frames in {entry.frames_dir}")
    return frames, _mask_paths(entry, len(frames))


def _render(frame_paths: list[Path], mask_paths: list[Path], scene: SceneImage, out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    backdrop = None
    for i, (fp, mp) in enumerate(zip(frame_paths, mask_paths)):
        frame = media.load_frame(fp)
        mask = media.load_mask(mp)
        if mask.shape != frame.shape[:2]:
            raise BenchmarkError(f"{mp}: mask is {mask.shape}, frame is {frame.shape[:2]}")
        if backdrop is None or backdrop.shape != frame.shape:
            backdrop = media.resize(scene.pixels(), frame.shape[0], frame.shape[1])
        out = out_dir / media.frame_name(i)
        media.save_frame(out, media.composite_matting(frame, backdrop, mask))
        written.append(out)
    return written


def generate_split(
    cslr_manifest: Sequence[CslrEntry],
    scene_catalog: Catalog,
    config: BenchmarkConfig,
    split_id: int,
    out_dir: str | Path,
) -> tuple[list[SampleRecord], list[Path]]:
    """Synthesize one split under ``out_dir/split_<id>``.

    Returns the manifest rows (sorted by video id) and every frame written.
    """
    out_dir = Path(out_dir)
    entries = sorted(cslr_manifest, key=lambda e: e.video_id)
    if not entries:
        raise BenchmarkError("CSLR manifest is empty")
    inputs = [_inputs(e) for e in entries]

    subset_rng = np.random.default_rng(derive_seed(config.master_seed, "subset", split_id))
    pool = SubsetPool(select_scene_subset(scene_catalog, len(entries), subset_rng))
    split_dir = out_dir / f"split_{split_id}"
    records, jobs = [], []
    for entry, (frames, masks) in zip(entries, inputs):
        seed = derive_seed(config.master_seed, split_id, entry.video_id)
        scene = assign_scene(entry.video_id, pool, np.random.default_rng(seed))
        vid_dir = split_dir / entry.video_id
        records.append(
            SampleRecord(
                video_id=entry.video_id,
                frames_dir=vid_dir.relative_to(out_dir).as_posix(),
                mask_dir=str(entry.mask_dir) if entry.mask_dir else None,
                glosses=list(entry.glosses),
                scene_class=scene.class_label,
                scene_image_id=scene.id,
                split_id=split_id,
                seed=seed,
            )
        )
        jobs.append((frames, masks, scene, vid_dir))

    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as ex:
            written = list(ex.map(lambda j: _render(*j), jobs))
    else:
        written = [_render(*j) for j in jobs]

    write_jsonl(split_dir / "manifest.jsonl", (r.to_json() for r in records))
    log.info("split %d: %d videos, %d frames", split_id, len(records), sum(map(len, written)))
    return records, [p for w in written for p in w]


def generate_benchmark(
    cslr_manifest: Sequence[CslrEntry],
    scene_catalog: Catalog,
    config: BenchmarkConfig,
    out_dir: str | Path,
) -> list[list[SampleRecord]]:
    return [generate_split(cslr_manifest, scene_catalog, config, sid, out_dir)[0] for sid in config.split_ids]
