"""Training loop, evaluation and the baseline / BR / BR+DAE comparison."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .. import benchgen, ctc, daecore, media
from ..benchgen import derive_seed
from ..daecore import LossConfig, Params
from ..media import AugmentConfig, SceneImage, Video
from ..metrics import WerBreakdown, corpus_wer
from . import model, synth
from .optim import AdamState, adam_step, cosine_lr
from .synth import SynthConfig

log = logging.getLogger(__name__)

CONDITIONS = {
    "baseline": (False, False),
    "BR": (True, False),
    "BR+DAE": (True, True),
}


def _toy_augment() -> AugmentConfig:
    return AugmentConfig(crop_size=32, resize_size=34)


@dataclass
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 1e-4
    batch_size: int = 2
    epochs: int = 30
    br_enabled: bool = False
    dae_enabled: bool = False
    k_per_class: int = 10
    hidden: int = 64
    feat_dim: int = 32
    latent_dim: int = 16
    conv_channels: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    augment: AugmentConfig = field(default_factory=_toy_augment)
    spatial_aug: bool = True
    temporal_aug: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if isinstance(self.loss, dict):
            self.loss = LossConfig(**self.loss)
        if isinstance(self.augment, dict):
            self.augment = AugmentConfig(**self.augment)
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")

    def shape(self, synth_cfg: SynthConfig) -> model.ModelShape:
        return model.ModelShape(synth_cfg.frame_size, synth_cfg.vocab, self.hidden, self.feat_dim, self.latent_dim, self.dae_enabled, self.conv_channels)


@dataclass
class TrainState:
    student: Params
    teacher: Params
    adam: AdamState = field(default_factory=AdamState)
    step: int = 0
    total_steps: int = 1
    skipped: int = 0


def init_state(cfg: TrainConfig, synth_cfg: SynthConfig, total_steps: int = 1) -> TrainState:
    student = model.init_params(cfg.shape(synth_cfg), np.random.default_rng(derive_seed(cfg.seed, "init")))
    # teacher starts as an exact copy of the student
    teacher = {k: v.copy() for k, v in student.items()}
    return TrainState(student, teacher, total_steps=total_steps)


def targets_of(video: Video) -> list[int]:
    return [synth.gloss_label(g) for g in video.glosses]


def make_inputs(
    video: Video, rng: np.random.Generator, cfg: TrainConfig, pool: Sequence[SceneImage]
) -> tuple[np.ndarray, np.ndarray]:
    """Student and teacher frames for one training video.

    Both branches share the spatial/temporal augmentation so frames stay
    aligned; only the student sees the randomized background.
    """
    aug = cfg.augment
    if cfg.spatial_aug:
        video = media.spatial_augment(video, rng, aug)
    if cfg.temporal_aug:
        video = media.temporal_augment(video, rng, aug)
    frames = video.frames
    if not cfg.br_enabled:
        return frames, frames
    scene = pool[int(rng.integers(len(pool)))].pixels()
    scene = media.color_jitter(scene, rng, aug.jitter_strength)
    scene = media.random_rotate(scene, rng, aug.rotation_max_deg)
    scene = media.resize(scene, frames.shape[1], frames.shape[2])
    lam = media.sample_lambda(rng, aug)
    mixed = np.stack([media.mixup_background(f, scene, lam) for f in frames])
    return mixed, frames


@dataclass
class StepResult:
    applied: bool
    parts: model.LossParts | None = None


def train_step(
    state: TrainState,
    batch: Sequence[Video],
    rng: np.random.Generator,
    cfg: TrainConfig,
    pool: Sequence[SceneImage] = (),
) -> StepResult:
    """Augment, compute losses and gradients, apply Adam, then the momentum update."""
    student_in, teacher_in = zip(*(make_inputs(v, rng, cfg, pool) for v in batch))
    targets = [targets_of(v) for v in batch]
    try:
        parts, grads = model.loss_and_grads(
            state.student, state.teacher, student_in, teacher_in if cfg.dae_enabled else None, targets, cfg.loss
        )
    except ctc.CTCInfeasibleError:
        state.skipped += 1
        return StepResult(False)
    state.step += 1
    lr = cosine_lr(cfg.lr, state.step, state.total_steps)
    state.student = adam_step(state.student, grads, state.adam, state.step, lr, cfg.weight_decay)
    if cfg.dae_enabled:
        state.teacher = daecore.momentum_update(state.teacher, state.student, cfg.loss.momentum)
    return StepResult(True, parts)


def _params_of(m) -> Mapping[str, np.ndarray]:
    return m.student if isinstance(m, TrainState) else m


@dataclass
class Evaluation:
    wer: float
    breakdown: WerBreakdown
    decodes: dict[str, list[str]]


def evaluate(m: TrainState | Mapping[str, np.ndarray], videos: Sequence[Video]) -> Evaluation:
    """Greedy-decode every video and pool WER over the set."""
    params = _params_of(m)
    decodes = {}
    pairs = []
    for v in videos:
        _, _, logits = model.forward_student(params, v.frames)
        hyp = [synth.gloss_name(k) for k in ctc.greedy_decode(logits)]
        decodes[v.id] = hyp
        pairs.append((list(v.glosses), hyp))
    w, br = corpus_wer(pairs)
    return Evaluation(w, br, decodes)


def train(
    cfg: TrainConfig, synth_cfg: SynthConfig, train_videos: Sequence[Video], pool: Sequence[SceneImage] = ()
) -> tuple[TrainState, list[model.LossParts]]:
    steps_per_epoch = math.ceil(len(train_videos) / cfg.batch_size)
    state = init_state(cfg, synth_cfg, cfg.epochs * steps_per_epoch)
    rng = np.random.default_rng(derive_seed(cfg.seed, "augment"))
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(train_videos))
        for i in range(0, len(order), cfg.batch_size):
            res = train_step(state, [train_videos[j] for j in order[i : i + cfg.batch_size]], rng, cfg, pool)
            if res.applied:
                history.append(res.parts)
    return state, history


def training_pool(cfg: TrainConfig, synth_cfg: SynthConfig) -> list[SceneImage]:
    catalog = synth.training_scene_catalog(synth_cfg)
    return benchgen.select_training_pool(catalog, cfg.k_per_class, np.random.default_rng(derive_seed(cfg.seed, "pool")))


# -- experiment -------------------------------------------------------------

PUBLISHED_SEEDS = (0, 1, 2, 3, 4)


def _merge(base: dict, over: Mapping, where: str = "train") -> dict:
    out = dict(base)
    for k, v in over.items():
        if k not in out:
            raise ValueError(f"unknown config key {where}.{k}")
        out[k] = _merge(out[k], v, f"{where}.{k}") if isinstance(v, Mapping) and isinstance(out.get(k), dict) else v
    return out


def demo_train_config() -> TrainConfig:
    """Desk-scale settings for the three-condition demo (about 3 min on one core)."""
    return TrainConfig(
        lr=3e-3,
        epochs=100,
        k_per_class=20,
        conv_channels=8,
        loss=LossConfig(rec_reduction="mean"),
    )


@dataclass
class ExperimentConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    train: TrainConfig = field(default_factory=lambda: demo_train_config())
    conditions: tuple[str, ...] = ("baseline", "BR", "BR+DAE")

    def __post_init__(self) -> None:
        if isinstance(self.synth, dict):
            self.synth = SynthConfig(**_merge(asdict(SynthConfig()), self.synth, "synth"))
        if isinstance(self.train, dict):
            # partial overrides apply on top of the demo settings
            self.train = TrainConfig(**_merge(asdict(demo_train_config()), self.train))
        self.conditions = tuple(self.conditions)
        unknown = set(self.conditions) - set(CONDITIONS)
        if unknown:
            raise ValueError(f"unknown conditions {sorted(unknown)}")

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        raw = json.loads(Path(path).read_text())
        known = {f.name for f in fields(cls)}
        extra = set(raw) - known
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        return cls(**raw)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, synth=replace(self.synth, seed=seed), train=replace(self.train, seed=seed))

    def to_dict(self) -> dict:
        return asdict(self)


def run_condition(name: str, exp: ExperimentConfig, data: synth.SynthDataset) -> dict:
    br, dae = CONDITIONS[name]
    cfg = replace(exp.train, br_enabled=br, dae_enabled=dae)
    pool = training_pool(cfg, exp.synth) if br else []
    state, history = train(cfg, exp.synth, data.train, pool)
    clean = evaluate(state, data.test_clean)
    shifted = evaluate(state, data.test_shifted)
    last = history[-1] if history else None
    log.info("%s: wer_clean=%.3f wer_shifted=%.3f", name, clean.wer, shifted.wer)
    return {
        "condition": name,
        "wer_clean": clean.wer,
        "wer_shifted": shifted.wer,
        "clean": clean.breakdown.to_dict(),
        "shifted": shifted.breakdown.to_dict(),
        "steps": state.step,
        "skipped_batches": state.skipped,
        "final_loss": asdict(last) if last else None,
    }


def run_experiment(exp: ExperimentConfig) -> dict:
    """Train every condition from the same seeds and score clean vs shifted test sets."""
    t0 = time.perf_counter()
    data = synth.gen_synthetic_dataset(exp.synth)
    rows = [run_condition(name, exp, data) for name in exp.conditions]
    return {"config": exp.to_dict(), "conditions": rows, "wall_time_s": round(time.perf_counter() - t0, 3)}


def format_report(report: dict) -> str:
    lines = [f"{'condition':<10} {'WER clean':>10} {'WER shifted':>12} {'gap':>8}"]
    for row in report["conditions"]:
        gap = row["wer_shifted"] - row["wer_clean"]
        lines.append(f"{row['condition']:<10} {row['wer_clean']:>10.3f} {row['wer_shifted']:>12.3f} {gap:>8.3f}")
    lines.append(f"wall time: {report['wall_time_s']:.1f} s")
    return "\n".join(lines) + "\n"


def write_report(report: dict, out_dir: str | Path) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    js = out_dir / "report.json"
    txt = out_dir / "report.txt"
    js.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    txt.write_text(format_report(report))
    return js, txt
