"""Pixel-level operations on normalized RGB frames.

Frames are ``(H, W, 3)`` float64 arrays with values in ``[0, 1]``; masks are
``(H, W)`` soft alpha maps where 1 marks the signer.  A video is a stack of
frames of shape ``(T, H, W, 3)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

__all__ = [
    "AugmentConfig",
    "SceneImage",
    "Video",
    "color_jitter",
    "composite_matting",
    "load_frame",
    "load_mask",
    "load_video_dir",
    "mixup_background",
    "random_rotate",
    "resize",
    "rotate",
    "sample_lambda",
    "save_frame",
    "save_mask",
    "save_video_dir",
    "spatial_augment",
    "temporal_augment",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Video:
    id: str
    frames: np.ndarray
    glosses: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        frames = _frozen(self.frames)
        if frames.ndim != 4 or frames.shape[-1] != 3:
            raise ValueError(f"video {self.id!r}: frames must be (T, H, W, 3), got {frames.shape}")
        if frames.shape[0] < 1:
            raise ValueError(f"video {self.id!r}: needs at least one frame")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "glosses", tuple(self.glosses))

    def __len__(self) -> int:
        return self.frames.shape[0]

    def with_frames(self, frames: np.ndarray) -> "Video":
        return replace(self, frames=frames)


@dataclass(frozen=True)
class SceneImage:
    """A scene image, either held in memory or read lazily from ``path``."""

    id: str
    class_label: str
    image: np.ndarray | None = field(default=None, repr=False, compare=False)
    path: Path | None = None

    def __post_init__(self) -> None:
        if not self.class_label:
            raise ValueError(f"scene {self.id!r}: empty class label")
        if self.image is None and self.path is None:
            raise ValueError(f"scene {self.id!r}: needs pixels or a path")
        if self.image is not None:
            object.__setattr__(self, "image", _frozen(self.image))

    def pixels(self) -> np.ndarray:
        if self.image is not None:
            return self.image
        return load_frame(self.path)


@dataclass
class AugmentConfig:
    lambda_min: float = 0.1
    lambda_max: float = 0.6
    jitter_strength: float = 0.4
    rotation_max_deg: float = 15.0
    crop_size: int = 224
    resize_size: int = 256
    hflip_prob: float = 0.5
    dup_frac_max: float = 0.20
    del_frac_max: float = 0.20

    def __post_init__(self) -> None:
        if not 0.0 <= self.lambda_min <= self.lambda_max <= 1.0:
            raise ValueError("need 0 <= lambda_min <= lambda_max <= 1")
        for name in ("hflip_prob", "dup_frac_max", "del_frac_max"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.crop_size > self.resize_size:
            raise ValueError("crop_size cannot exceed resize_size")


def _check_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    for axis, name in enumerate(("height", "width")):
        if a.shape[axis] != b.shape[axis]:
            raise ValueError(f"{what}: {name} mismatch ({a.shape[axis]} vs {b.shape[axis]})")
    if a.ndim == 3 and b.ndim == 3 and a.shape[2] != b.shape[2]:
        raise ValueError(f"{what}: channels mismatch ({a.shape[2]} vs {b.shape[2]})")


def _blend(alpha: np.ndarray, fg: np.ndarray, bg: np.ndarray) -> np.ndarray:
    # the clip keeps the result a strict convex combination despite rounding
    out = alpha * fg + (1.0 - alpha) * bg
    return np.clip(out, np.minimum(fg, bg), np.maximum(fg, bg))


def composite_matting(sign: np.ndarray, scene: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Paste the signer onto ``scene`` using a soft alpha ``mask``.

    ``out = mask * sign + (1 - mask) * scene``, per pixel and channel.
    """
    sign = np.asarray(sign, dtype=np.float64)
    scene = np.asarray(scene, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    _check_same_shape(sign, scene, "composite_matting sign/scene")
    _check_same_shape(sign, mask, "composite_matting sign/mask")
    return _blend(mask[..., None], sign, scene)


def mixup_background(sign: np.ndarray, scene: np.ndarray, lam: float) -> np.ndarray:
    """Mix a scene into a sign frame with weight ``lam`` and no mask.

    Equivalent to :func:`composite_matting` with a constant alpha of ``1 - lam``.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    sign = np.asarray(sign, dtype=np.float64)
    mask = np.full(sign.shape[:2], 1.0 - lam)
    return composite_matting(sign, scene, mask)


def sample_lambda(rng: np.random.Generator, config: AugmentConfig | None = None) -> float:
    config = config or AugmentConfig()
    if config.lambda_min == config.lambda_max:
        return float(config.lambda_min)
    return float(rng.uniform(config.lambda_min, config.lambda_max))


_LUMA = np.array([0.299, 0.587, 0.114])


def color_jitter(image: np.ndarray, rng: np.random.Generator, strength: float = 0.4) -> np.ndarray:
    """Random brightness, contrast and saturation scaling.

    Each factor is drawn independently from ``[1 - strength, 1 + strength]``
    and applied in that order.  Factors equal to 1 leave the image untouched.
    """
    if strength < 0:
        raise ValueError("strength must be >= 0")
    out = np.asarray(image, dtype=np.float64)
    b, c, s = (rng.uniform(1.0 - strength, 1.0 + strength) for _ in range(3)) if strength else (1.0, 1.0, 1.0)
    if b != 1.0:
        out = np.clip(out * b, 0.0, 1.0)
    if c != 1.0:
        mean = float((out @ _LUMA).mean())
        out = np.clip((out - mean) * c + mean, 0.0, 1.0)
    if s != 1.0:
        gray = (out @ _LUMA)[..., None]
        out = np.clip((out - gray) * s + gray, 0.0, 1.0)
    return out


def _bilinear_sample(image: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Sample ``image`` at fractional coordinates, replicating edge pixels."""
    h, w = image.shape[:2]
    rows = np.clip(rows, 0.0, h - 1)
    cols = np.clip(cols, 0.0, w - 1)
    r0 = np.floor(rows).astype(np.intp)
    c0 = np.floor(cols).astype(np.intp)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    tr = (rows - r0)[..., None]
    tc = (cols - c0)[..., None]
    # a + (b - a) * t keeps constant regions exactly constant
    top = image[r0, c0] + (image[r0, c1] - image[r0, c0]) * tc
    bot = image[r1, c0] + (image[r1, c1] - image[r1, c0]) * tc
    return top + (bot - top) * tr


def resize(image: np.ndarray, h: int, w: int) -> np.ndarray:
    """Bilinear resize using pixel-center alignment."""
    if h < 1 or w < 1:
        raise ValueError(f"target size must be at least 1x1, got {h}x{w}")
    image = np.asarray(image, dtype=np.float64)
    ih, iw = image.shape[:2]
    if (ih, iw) == (h, w):
        return image.copy()
    rows = (np.arange(h) + 0.5) * (ih / h) - 0.5
    cols = (np.arange(w) + 0.5) * (iw / w) - 0.5
    squeeze = image.ndim == 2
    src = image[..., None] if squeeze else image
    out = _bilinear_sample(src, rows[:, None], cols[None, :])
    return out[..., 0] if squeeze else out


def rotate(image: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rotate counter-clockwise (as displayed) about the image center.

    Bilinear sampling; samples falling outside the source are filled by edge
    replication.
    """
    image = np.asarray(image, dtype=np.float64)
    if angle_deg == 0:
        return image.copy()
    h, w = image.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = math.radians(angle_deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    # inverse map: rows point down, so a CCW display rotation is CW in (x, y)
    src_x = cos_t * dx - sin_t * dy + cx
    src_y = sin_t * dx + cos_t * dy + cy
    return _bilinear_sample(image, src_y, src_x)


def random_rotate(image: np.ndarray, rng: np.random.Generator, max_deg: float = 15.0) -> np.ndarray:
    if max_deg < 0:
        raise ValueError("max_deg must be >= 0")
    angle = float(rng.uniform(-max_deg, max_deg)) if max_deg else 0.0
    return rotate(image, angle)


def spatial_augment(video: Video, rng: np.random.Generator, config: AugmentConfig | None = None) -> Video:
    """Resize every frame, crop all frames at one shared offset, flip all or none."""
    config = config or AugmentConfig()
    size, crop = config.resize_size, config.crop_size
    frames = np.stack([resize(f, size, size) for f in video.frames])
    top = int(rng.integers(0, size - crop + 1))
    left = int(rng.integers(0, size - crop + 1))
    frames = frames[:, top : top + crop, left : left + crop]
    if rng.random() < config.hflip_prob:
        frames = frames[:, :, ::-1]
    return video.with_frames(frames)


def temporal_augment(video: Video, rng: np.random.Generator, config: AugmentConfig | None = None) -> Video:
    """Insert duplicated frames next to their sources, then delete frames.

    At most ``floor(dup_frac_max * L)`` duplicates are inserted, then at most
    ``floor(del_frac_max * L')`` frames removed from the lengthened clip, never
    dropping below one frame.
    """
    config = config or AugmentConfig()
    frames = video.frames
    n = frames.shape[0]
    n_dup = int(rng.integers(0, math.floor(config.dup_frac_max * n) + 1))
    if n_dup:
        src = np.sort(rng.choice(n, size=n_dup, replace=False))
        frames = np.insert(frames, src + 1, frames[src], axis=0)
    n = frames.shape[0]
    n_del = min(int(rng.integers(0, math.floor(config.del_frac_max * n) + 1)), n - 1)
    if n_del:
        drop = rng.choice(n, size=n_del, replace=False)
        frames = np.delete(frames, drop, axis=0)
    return video.with_frames(frames)


# -- 8-bit file I/O ---------------------------------------------------------


def to_uint8(x: np.ndarray) -> np.ndarray:
    """Quantize ``[0, 1]`` floats to bytes with round-half-up."""
    return np.floor(np.clip(x, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def load_frame(path: str | Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            data = np.asarray(im.convert("RGB"), dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc
    return data / 255.0


def load_mask(path: str | Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            data = np.asarray(im.convert("L"), dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot read mask {path}: {exc}") from exc
    return data / 255.0


def save_frame(path: str | Path, frame: np.ndarray) -> None:
    Image.fromarray(to_uint8(frame), mode="RGB").save(path, format="PNG", optimize=False)


def save_mask(path: str | Path, mask: np.ndarray) -> None:
    Image.fromarray(to_uint8(mask), mode="L").save(path, format="PNG", optimize=False)


def frame_name(index: int) -> str:
    """Zero-padded, 1-based frame file name (``000001.png``)."""
    return f"{index + 1:06d}.png"


def list_frames(directory: str | Path) -> list[Path]:
    return sorted(p for p in Path(directory).iterdir() if p.suffix.lower() == ".png")


def load_video_dir(directory: str | Path, video_id: str | None = None, glosses=()) -> Video:
    directory = Path(directory)
    paths = list_frames(directory)
    if not paths:
        raise OSError(f"no PNG frames in {directory}")
    frames = np.stack([load_frame(p) for p in paths])
    return Video(video_id or directory.name, frames, tuple(glosses))


def save_video_dir(directory: str | Path, frames: np.ndarray) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for i, frame in enumerate(frames):
        p = directory / frame_name(i)
        save_frame(p, frame)
        out.append(p)
    return out
