"""Per-frame MLP recognizer with an optional disentangling auto-encoder.

Data path per frame: optional shared 5x5 convolution with ReLU -> 2x2
average pool -> flatten -> two-layer MLP giving the feature ``f`` -> (DAE encoder -> signer half of the latent) -> linear
classifier over ``vocab + 1`` classes (blank = 0).  Without the DAE the
classifier reads ``f`` directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .. import ctc, daecore
from ..daecore import LossConfig, Params

POOL = 2
KERNEL = 5


@dataclass
class ModelShape:
    frame_size: int = 32
    vocab: int = 5
    hidden: int = 64
    feat_dim: int = 32
    latent_dim: int = 16
    dae: bool = True
    conv_channels: int = 0

    @property
    def input_dim(self) -> int:
        return (self.frame_size // POOL) ** 2 * (self.conv_channels or 3)

    @property
    def n_classes(self) -> int:
        return self.vocab + 1

    @property
    def cls_in(self) -> int:
        return self.latent_dim // 2 if self.dae else self.feat_dim


def _layer(rng, fan_in, fan_out):
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, (fan_in, fan_out)), rng.uniform(-bound, bound, fan_out)


def init_params(shape: ModelShape, rng: np.random.Generator) -> Params:
    """Feature MLP first, so every wiring shares the same extractor init for a seed."""
    p: Params = {}
    if shape.conv_channels:
        p["conv_w"], p["conv_b"] = _layer(rng, KERNEL * KERNEL * 3, shape.conv_channels)
    p["feat_w1"], p["feat_b1"] = _layer(rng, shape.input_dim, shape.hidden)
    p["feat_w2"], p["feat_b2"] = _layer(rng, shape.hidden, shape.feat_dim)
    if shape.dae:
        p.update(daecore.init_dae(shape.feat_dim, shape.latent_dim, rng))
    p["cls_w"], p["cls_b"] = _layer(rng, shape.cls_in, shape.n_classes)
    return p


def _pool(a: np.ndarray) -> np.ndarray:
    t, h, w, c = a.shape
    return a[:, : h - h % POOL, : w - w % POOL].reshape(t, h // POOL, POOL, w // POOL, POOL, c).mean(axis=(2, 4))


def _unpool(d: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Adjoint of :func:`_pool`."""
    out = np.zeros(shape)
    t, h, w, c = d.shape
    up = np.repeat(np.repeat(d, POOL, axis=1), POOL, axis=2) / (POOL * POOL)
    out[:, : h * POOL, : w * POOL] = up
    return out


def preprocess(frames: np.ndarray) -> np.ndarray:
    """``(T, H, W, 3)`` frames -> centred frames (conv input) of the same shape."""
    return np.asarray(frames, dtype=np.float64) - 0.5


def _patches(x: np.ndarray) -> np.ndarray:
    """``(T, H, W, 3)`` -> ``(T, H, W, K*K*3)`` zero-padded 'same' neighbourhoods."""
    r = KERNEL // 2
    padded = np.pad(x, ((0, 0), (r, r), (r, r), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(padded, (KERNEL, KERNEL), axis=(1, 2))
    # win: (T, H, W, 3, K, K) -> channel-last patch vectors
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(*x.shape[:3], -1)


@dataclass
class _Cache:
    patches: np.ndarray | None
    zc: np.ndarray | None
    x: np.ndarray
    z1: np.ndarray


def _features(params: Mapping[str, np.ndarray], frames: np.ndarray) -> tuple[np.ndarray, _Cache]:
    patches = zc = None
    if "conv_w" in params:
        patches = _patches(frames)
        zc = patches @ params["conv_w"] + params["conv_b"]
        maps = np.maximum(zc, 0.0)
    else:
        maps = frames
    x = _pool(maps).reshape(len(frames), -1)
    z1 = x @ params["feat_w1"] + params["feat_b1"]
    return np.maximum(z1, 0.0) @ params["feat_w2"] + params["feat_b2"], _Cache(patches, zc, x, z1)


def _features_backward(params: Mapping[str, np.ndarray], cache: _Cache, d_f: np.ndarray, grads: Params) -> None:
    a1 = np.maximum(cache.z1, 0.0)
    grads["feat_w2"] = a1.T @ d_f
    grads["feat_b2"] = d_f.sum(axis=0)
    d_z1 = (d_f @ params["feat_w2"].T) * (cache.z1 > 0)
    grads["feat_w1"] = cache.x.T @ d_z1
    grads["feat_b1"] = d_z1.sum(axis=0)
    if cache.zc is None:
        return
    d_x = d_z1 @ params["feat_w1"].T
    t, h, w, c = cache.zc.shape
    d_zc = _unpool(d_x.reshape(t, h // POOL, w // POOL, c), cache.zc.shape) * (cache.zc > 0)
    grads["conv_w"] = cache.patches.reshape(-1, cache.patches.shape[-1]).T @ d_zc.reshape(-1, c)
    grads["conv_b"] = d_zc.sum(axis=(0, 1, 2))


def features(params: Mapping[str, np.ndarray], frames: np.ndarray) -> np.ndarray:
    """Per-frame feature vectors ``(T, feat_dim)`` for centred frames."""
    return _features(params, frames)[0]


def _is_dae(params: Mapping[str, np.ndarray]) -> bool:
    return "enc_w1" in params


def forward_student(params: Mapping[str, np.ndarray], frames: np.ndarray):
    """Inference path: returns ``(f, latent or None, logits)`` for one video.

    Only the feature extractor, encoder and classifier are read; the decoder
    and any teacher copy are never touched.
    """
    f = features(params, preprocess(frames))
    if _is_dae(params):
        h = daecore.encode(params, f)
        s = h.signer
    else:
        h, s = None, f
    return f, h, s @ params["cls_w"] + params["cls_b"]


@dataclass
class LossParts:
    ctc: float
    sim: float
    rec: float
    total: float


def loss_and_grads(
    params: Mapping[str, np.ndarray],
    teacher: Mapping[str, np.ndarray] | None,
    student_frames: Sequence[np.ndarray],
    teacher_frames: Sequence[np.ndarray] | None,
    targets: Sequence[Sequence[int]],
    loss_config: LossConfig,
) -> tuple[LossParts, Params]:
    """Training loss for a batch of videos and its gradient for every student tensor.

    CTC is averaged over videos; DAE terms are averaged over all frames of the
    batch.  Teacher inputs are constants.  Raises
    :class:`~slrobust.ctc.CTCInfeasibleError` when a target cannot fit.
    """
    lengths = [len(v) for v in student_frames]
    bounds = np.cumsum([0] + lengths)
    f, cache = _features(params, np.concatenate([preprocess(v) for v in student_frames]))
    dae = _is_dae(params)
    if dae:
        f_k = features(teacher, np.concatenate([preprocess(v) for v in teacher_frames]))
        # same forward as dae_losses_and_grads; needed here for the classifier input
        s = daecore.encode(params, f).signer
    else:
        s = f
    logits = s @ params["cls_w"] + params["cls_b"]

    B = len(student_frames)
    l_ctc = 0.0
    d_logits = np.empty_like(logits)
    for b in range(B):
        lo, hi = bounds[b], bounds[b + 1]
        loss, g = ctc.ctc_loss_and_grad(logits[lo:hi], targets[b])
        l_ctc += loss / B
        d_logits[lo:hi] = g / B

    grads: Params = {"cls_w": s.T @ d_logits, "cls_b": d_logits.sum(axis=0)}
    d_s = d_logits @ params["cls_w"].T
    if dae:
        out = daecore.dae_losses_and_grads(params, teacher, f, f_k, loss_config, d_signer=d_s)
        grads.update(out.grads)
        d_f = out.d_f_q
        l_sim, l_rec = out.l_sim, out.l_rec
    else:
        d_f, l_sim, l_rec = d_s, 0.0, 0.0

    _features_backward(params, cache, d_f, grads)

    total = daecore.total_loss(l_ctc, l_sim, l_rec, loss_config)
    return LossParts(l_ctc, l_sim, l_rec, total), {k: grads[k] for k in params}
