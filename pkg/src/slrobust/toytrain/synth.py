"""Procedural sign videos and scene textures.

A "signer" is a torso, a head and two mirrored hands.  Each gloss is a hand
height; between glosses the hands drop to a rest pose, which the model has to
learn as blank.  Videos are rendered on a flat studio colour, and shifted
twins are produced by matting the same signer onto textured scenes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import media
from ..benchgen import derive_seed
from ..media import SceneImage, Video

TEXTURE_KINDS = ("stripes", "checker", "noise", "gradient")


@dataclass
class SynthConfig:
    n_train: int = 60
    n_test: int = 20
    frame_size: int = 32
    vocab: int = 5
    seq_len: tuple[int, int] = (8, 16)
    gloss_frames: tuple[int, int] = (2, 3)
    clean_background: tuple[float, float, float] = (0.35, 0.45, 0.60)
    shift_backgrounds: tuple[str, ...] = TEXTURE_KINDS
    scenes_per_class: int = 20
    signer_jitter: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        self.seq_len = tuple(self.seq_len)
        self.gloss_frames = tuple(self.gloss_frames)
        self.clean_background = tuple(self.clean_background)
        self.shift_backgrounds = tuple(self.shift_backgrounds)
        if self.vocab < 2:
            raise ValueError("vocab must be >= 2")
        if not 1 <= self.seq_len[0] <= self.seq_len[1]:
            raise ValueError("seq_len must satisfy 1 <= min <= max")
        if self.gloss_frames[0] < 1:
            raise ValueError("gloss_frames must be >= 1")
        unknown = set(self.shift_backgrounds) - set(TEXTURE_KINDS)
        if unknown:
            raise ValueError(f"unknown textures {sorted(unknown)}")


@dataclass
class SynthDataset:
    train: list[Video]
    test_clean: list[Video]
    test_shifted: list[Video]
    train_masks: list[np.ndarray] = field(default_factory=list, repr=False)
    test_masks: list[np.ndarray] = field(default_factory=list, repr=False)


def gloss_name(label: int) -> str:
    return f"G{label}"


def gloss_label(name: str) -> int:
    return int(name[1:])


# -- signer rendering -------------------------------------------------------


def _disc(yy, xx, cy, cx, r):
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


def _hand_row(label: int, vocab: int, size: int) -> float:
    """Hand height for a gloss; label 0 is the rest pose."""
    top, bottom = 0.14 * size, 0.62 * size
    if label == 0:
        return 0.82 * size
    return top + (bottom - top) * (label - 1) / max(vocab - 1, 1)


@dataclass
class _Signer:
    dx: int
    dy: int
    skin: np.ndarray
    shirt: np.ndarray


def _sample_signer(rng: np.random.Generator, jitter: int) -> _Signer:
    dx, dy = (int(v) for v in rng.integers(-jitter, jitter + 1, size=2))
    skin = np.clip(np.array([0.92, 0.72, 0.58]) + rng.uniform(-0.05, 0.05, 3), 0, 1)
    shirt = np.clip(np.array([0.12, 0.12, 0.16]) + rng.uniform(-0.04, 0.04, 3), 0, 1)
    return _Signer(dx, dy, skin, shirt)


def render_signer(label: int, signer: _Signer, size: int, vocab: int) -> tuple[np.ndarray, np.ndarray]:
    """Signer pixels and exact binary mask for one pose."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cx = (size - 1) / 2 + signer.dx
    oy = signer.dy
    img = np.zeros((size, size, 3))
    torso = (np.abs(xx - cx) <= 0.2 * size) & (yy >= 0.38 * size + oy)
    head = _disc(yy, xx, 0.24 * size + oy, cx, 0.11 * size)
    img[torso] = signer.shirt
    img[head] = signer.skin
    hy = _hand_row(label, vocab, size) + oy
    spread = 0.33 * size
    r = 0.1 * size
    hands = _disc(yy, xx, hy, cx - spread, r) | _disc(yy, xx, hy, cx + spread, r)
    img[hands] = signer.skin
    mask = (torso | head | hands).astype(np.float64)
    return img, mask


def _frame_labels(glosses: list[int], rng: np.random.Generator, config: SynthConfig) -> list[int]:
    lo, hi = config.gloss_frames
    labels = [0]
    for g in glosses:
        labels += [g] * int(rng.integers(lo, hi + 1)) + [0]
    while len(labels) < config.seq_len[0]:
        labels.insert(0, 0) if rng.random() < 0.5 else labels.append(0)
    return labels


def _sample_glosses(rng: np.random.Generator, config: SynthConfig) -> list[int]:
    # longest gloss count whose worst-case layout still fits seq_len max
    max_n = max(1, (config.seq_len[1] - 1) // (config.gloss_frames[1] + 1))
    n = int(rng.integers(max(1, min(2, max_n)), max_n + 1))
    return [int(v) for v in rng.integers(1, config.vocab + 1, size=n)]


def render_video(video_id: str, rng: np.random.Generator, config: SynthConfig) -> tuple[Video, np.ndarray]:
    """One clean video plus its per-frame signer masks."""
    glosses = _sample_glosses(rng, config)
    labels = _frame_labels(glosses, rng, config)
    signer = _sample_signer(rng, config.signer_jitter)
    size = config.frame_size
    bg = np.broadcast_to(np.asarray(config.clean_background, dtype=np.float64), (size, size, 3))
    frames, masks = [], []
    cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for lab in labels:
        if lab not in cache:
            cache[lab] = render_signer(lab, signer, size, config.vocab)
        sprite, mask = cache[lab]
        frames.append(media.composite_matting(sprite, bg, mask))
        masks.append(mask)
    return Video(video_id, np.stack(frames), tuple(gloss_name(g) for g in glosses)), np.stack(masks)


# -- scene textures ---------------------------------------------------------


def _two_colors(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    return rng.uniform(0, 1, 3), rng.uniform(0, 1, 3)


def procedural_texture(kind: str, size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    c1, c2 = _two_colors(rng)
    if kind == "stripes":
        theta = rng.uniform(0, np.pi)
        freq = rng.uniform(2.0, 8.0)
        phase = rng.uniform(0, 1)
        t = (np.sin(2 * np.pi * (freq * (np.cos(theta) * xx + np.sin(theta) * yy) + phase)) > 0).astype(float)
    elif kind == "checker":
        cells = int(rng.integers(2, 9))
        ox, oy = rng.uniform(0, 1, 2)
        t = ((np.floor(xx * cells + ox) + np.floor(yy * cells + oy)) % 2).astype(float)
    elif kind == "noise":
        g = int(rng.integers(3, 9))
        coarse = rng.uniform(0, 1, (g, g, 3))
        return np.clip(media.resize(coarse, size, size), 0, 1)
    elif kind == "gradient":
        theta = rng.uniform(0, 2 * np.pi)
        t = np.cos(theta) * (xx - 0.5) + np.sin(theta) * (yy - 0.5)
        t = (t - t.min()) / max(t.max() - t.min(), 1e-12)
    else:
        raise ValueError(f"unknown texture kind {kind!r}")
    return c1 + (c2 - c1) * t[..., None]


def texture_catalog(kinds, per_class: int, size: int, seed: int, prefix: str) -> dict[str, list[SceneImage]]:
    rng = np.random.default_rng(seed)
    return {
        kind: [SceneImage(f"{prefix}/{kind}/{i:03d}", kind, procedural_texture(kind, size, rng)) for i in range(per_class)]
        for kind in kinds
    }


def gen_synthetic_dataset(config: SynthConfig) -> SynthDataset:
    """Train videos plus clean and background-shifted test twins."""
    train, train_masks, test, test_masks = [], [], [], []
    for split, n, videos, masks in (("train", config.n_train, train, train_masks), ("test", config.n_test, test, test_masks)):
        for i in range(n):
            vid = f"{split}-{i:04d}"
            v, m = render_video(vid, np.random.default_rng(derive_seed(config.seed, "video", vid)), config)
            videos.append(v)
            masks.append(m)

    held_out = texture_catalog(config.shift_backgrounds, config.scenes_per_class, config.frame_size, derive_seed(config.seed, "test-scenes"), "test")
    scene_rng = np.random.default_rng(derive_seed(config.seed, "test-assign"))
    kinds = sorted(held_out)
    shifted = []
    for i, (v, m) in enumerate(zip(test, test_masks)):
        kind = kinds[i % len(kinds)]
        scene = held_out[kind][int(scene_rng.integers(len(held_out[kind])))].pixels()
        frames = np.stack([media.composite_matting(f, scene, mk) for f, mk in zip(v.frames, m)])
        shifted.append(Video(v.id, frames, v.glosses))
    return SynthDataset(train, test, shifted, train_masks, test_masks)


def training_scene_catalog(config: SynthConfig) -> dict[str, list[SceneImage]]:
    """Scene catalog for background randomization, disjoint from the test scenes."""
    return texture_catalog(config.shift_backgrounds, config.scenes_per_class, config.frame_size, derive_seed(config.seed, "train-scenes"), "train")
