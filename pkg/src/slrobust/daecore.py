"""Disentangling auto-encoder numerics.

The encoder maps a feature vector ``f`` (dimension ``D``) to a latent ``h``
(dimension ``D_h``) through two affine layers with a rectifier in between.
The latent is split down the middle into a signer half and a background
half.  A shared decoder maps latents back to feature space.

All functions work on batches: features are ``(N, D)`` and latent halves
``(N, D_h / 2)``; losses are averaged over the batch axis.  Gradients are
derived by hand for this fixed graph.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

COS_EPS = 1e-12
FORMAT_VERSION = 1

Params = dict[str, np.ndarray]

__all__ = [
    "DegenerateVectorError",
    "LatentPair",
    "LossConfig",
    "cosine",
    "cosine_grad",
    "dae_losses_and_grads",
    "decode",
    "encode",
    "init_dae",
    "load_params",
    "loss_rec",
    "loss_sim",
    "momentum_update",
    "save_params",
    "sim_neg",
    "sim_pos",
    "swap",
    "total_loss",
]


class DegenerateVectorError(ValueError):
    """A latent vector has (near) zero norm, so its cosine is undefined."""


@dataclass
class LossConfig:
    margin: float = 0.5
    alpha: float = 3.0
    momentum: float = 0.99
    l_ve: float = 0.0
    l_va: float = 0.0
    # "own_background": each branch keeps its background and borrows the other signer
    swap_orientation: str = "own_background"
    activation: str = "relu"
    # let L_rec push on the student feature it reconstructs, not only on the encoder path
    rec_target_grad: bool = True
    # "sum" over feature dims (plain L1 norm) or "mean" over them
    rec_reduction: str = "sum"
    # component ablation switches
    use_sim: bool = True
    use_rec: bool = True

    def __post_init__(self) -> None:
        if not -1.0 <= self.margin <= 1.0:
            raise ValueError("margin must lie in [-1, 1]")
        if not 0.0 <= self.momentum <= 1.0:
            raise ValueError("momentum must lie in [0, 1]")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.swap_orientation not in ("own_background", "own_signer"):
            raise ValueError(f"unknown swap orientation {self.swap_orientation!r}")
        if self.rec_reduction not in ("sum", "mean"):
            raise ValueError(f"unknown rec reduction {self.rec_reduction!r}")
        if self.activation not in ("relu", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class LatentPair:
    signer: np.ndarray
    background: np.ndarray

    def __post_init__(self) -> None:
        if np.shape(self.signer) != np.shape(self.background):
            raise ValueError("signer and background halves must have the same shape")

    @classmethod
    def split(cls, h: np.ndarray) -> "LatentPair":
        h = np.asarray(h, dtype=np.float64)
        if h.shape[-1] % 2:
            raise ValueError(f"latent width {h.shape[-1]} is odd and cannot be halved")
        half = h.shape[-1] // 2
        return cls(h[..., :half], h[..., half:])

    def join(self) -> np.ndarray:
        return np.concatenate([self.signer, self.background], axis=-1)


# -- parameters -------------------------------------------------------------


def _uniform_layer(rng: np.random.Generator, fan_in: int, fan_out: int) -> tuple[np.ndarray, np.ndarray]:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, (fan_in, fan_out)), rng.uniform(-bound, bound, fan_out)


def init_dae(D: int, D_h: int | None = None, rng: np.random.Generator | None = None) -> Params:
    """Encoder ``D -> D_h -> D_h`` and decoder ``D_h -> D_h -> D``."""
    D_h = D // 2 if D_h is None else D_h
    if D_h % 2:
        raise ValueError("latent width must be even")
    rng = rng if rng is not None else np.random.default_rng(0)
    p: Params = {}
    p["enc_w1"], p["enc_b1"] = _uniform_layer(rng, D, D_h)
    p["enc_w2"], p["enc_b2"] = _uniform_layer(rng, D_h, D_h)
    p["dec_w1"], p["dec_b1"] = _uniform_layer(rng, D_h, D_h)
    p["dec_w2"], p["dec_b2"] = _uniform_layer(rng, D_h, D)
    return p


def _act(z: np.ndarray, activation: str) -> np.ndarray:
    return np.maximum(z, 0.0) if activation == "relu" else z


def _act_back(dz: np.ndarray, z: np.ndarray, activation: str) -> np.ndarray:
    return dz * (z > 0) if activation == "relu" else dz


def encode(params: Mapping[str, np.ndarray], f: np.ndarray, activation: str = "relu") -> LatentPair:
    f = np.asarray(f, dtype=np.float64)
    if f.shape[-1] != params["enc_w1"].shape[0]:
        raise ValueError(f"feature width {f.shape[-1]} does not match encoder input {params['enc_w1'].shape[0]}")
    z = f @ params["enc_w1"] + params["enc_b1"]
    return LatentPair.split(_act(z, activation) @ params["enc_w2"] + params["enc_b2"])


def decode(params: Mapping[str, np.ndarray], h: LatentPair, activation: str = "relu") -> np.ndarray:
    u = h.join()
    if u.shape[-1] != params["dec_w1"].shape[0]:
        raise ValueError(f"latent width {u.shape[-1]} does not match decoder input {params['dec_w1'].shape[0]}")
    z = u @ params["dec_w1"] + params["dec_b1"]
    return _act(z, activation) @ params["dec_w2"] + params["dec_b2"]


# -- similarity losses ------------------------------------------------------


def _sq_norms(x1: np.ndarray, x2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    s1 = np.sum(x1 * x1, axis=-1)
    s2 = np.sum(x2 * x2, axis=-1)
    if np.any(np.sqrt(s1) <= COS_EPS) or np.any(np.sqrt(s2) <= COS_EPS):
        raise DegenerateVectorError("cosine similarity of a zero-norm vector")
    return s1, s2


def _as_pair(x1, x2) -> tuple[np.ndarray, np.ndarray]:
    x1, x2 = np.asarray(x1, dtype=np.float64), np.asarray(x2, dtype=np.float64)
    if x1.shape != x2.shape:
        raise ValueError(f"shape mismatch {x1.shape} vs {x2.shape}")
    return x1, x2


def cosine(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    x1, x2 = _as_pair(x1, x2)
    s1, s2 = _sq_norms(x1, x2)
    # sqrt(s * s) == s in IEEE arithmetic, so cos(x, x) is exactly 1
    return np.clip(np.sum(x1 * x2, axis=-1) / np.sqrt(s1 * s2), -1.0, 1.0)


def cosine_grad(x1: np.ndarray, x2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Partial derivatives of ``cos(x1, x2)`` with respect to each argument."""
    x1, x2 = _as_pair(x1, x2)
    s1, s2 = _sq_norms(x1, x2)
    inv = (1.0 / np.sqrt(s1 * s2))[..., None]
    c = np.sum(x1 * x2, axis=-1)[..., None] * inv
    g1 = x2 * inv - c * x1 / s1[..., None]
    g2 = x1 * inv - c * x2 / s2[..., None]
    return g1, g2


def sim_pos(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Pull term, ``1 - cos(x1, x2)``."""
    return 1.0 - cosine(x1, x2)


def sim_neg(x1: np.ndarray, x2: np.ndarray, margin: float = 0.5) -> np.ndarray:
    """Push term, ``max(0, cos(x1, x2) - margin)``."""
    return np.maximum(0.0, cosine(x1, x2) - margin)


def sim_pos_grad(x1, x2):
    g1, g2 = cosine_grad(x1, x2)
    return -g1, -g2


def sim_neg_grad(x1, x2, margin: float = 0.5):
    active = (cosine(x1, x2) > margin)[..., None]
    g1, g2 = cosine_grad(x1, x2)
    return g1 * active, g2 * active


def loss_sim(hq: LatentPair, hk: LatentPair, margin: float = 0.5) -> float:
    """Signer halves pulled together, background halves pushed past ``margin``."""
    return float(np.mean(sim_pos(hq.signer, hk.signer) + sim_neg(hq.background, hk.background, margin)))


def swap(hq: LatentPair, hk: LatentPair) -> tuple[LatentPair, LatentPair]:
    """Exchange signer halves: returns ``(h_qk, h_kq)``.

    ``h_qk`` holds the student signer with the teacher background and
    ``h_kq`` the teacher signer with the student background.
    """
    if np.shape(hq.signer) != np.shape(hk.signer):
        raise ValueError("latent pairs have different shapes")
    return LatentPair(hq.signer, hk.background), LatentPair(hk.signer, hq.background)


def loss_rec(f_hat_q: np.ndarray, f_q: np.ndarray, f_hat_k: np.ndarray, f_k: np.ndarray, reduction: str = "sum") -> float:
    """Sum of L1 distances on both branches (batch-averaged).

    With ``reduction="mean"`` each distance is divided by the feature width.
    """
    pairs = [(f_hat_q, f_q), (f_hat_k, f_k)]
    for a, b in pairs:
        if np.shape(a) != np.shape(b):
            raise ValueError(f"shape mismatch {np.shape(a)} vs {np.shape(b)}")
    reduce = np.sum if reduction == "sum" else np.mean
    total = sum(reduce(np.abs(np.asarray(a) - np.asarray(b)), axis=-1) for a, b in pairs)
    return float(np.mean(total))


def momentum_update(teacher: Mapping[str, np.ndarray], student: Mapping[str, np.ndarray], m: float) -> Params:
    """``teacher <- m * teacher + (1 - m) * student`` for every tensor."""
    if not 0.0 <= m <= 1.0:
        raise ValueError("momentum must lie in [0, 1]")
    if teacher.keys() != student.keys():
        raise ValueError("teacher and student hold different parameter sets")
    out = {}
    for k, t in teacher.items():
        s = student[k]
        if np.shape(t) != np.shape(s):
            raise ValueError(f"shape mismatch for {k}: {np.shape(t)} vs {np.shape(s)}")
        if m == 1.0:
            out[k] = np.array(t, dtype=np.float64)
        elif m == 0.0:
            out[k] = np.array(s, dtype=np.float64)
        else:
            out[k] = m * t + (1.0 - m) * s
    return out


def total_loss(l_ctc: float, l_sim: float, l_rec: float, config: LossConfig | None = None) -> float:
    config = config or LossConfig()
    terms = (l_ctc, config.l_ve, config.l_va, l_sim, l_rec)
    if not all(math.isfinite(t) for t in terms):
        raise ValueError(f"non-finite loss component in {terms}")
    return l_ctc + config.l_ve + config.alpha * config.l_va + l_sim + l_rec


# -- fused forward/backward -------------------------------------------------


@dataclass
class DaeOutput:
    l_sim: float
    l_rec: float
    hq: LatentPair
    hk: LatentPair
    grads: Params = field(default_factory=dict)
    d_f_q: np.ndarray | None = None


def dae_losses_and_grads(
    params: Mapping[str, np.ndarray],
    teacher: Mapping[str, np.ndarray],
    f_q: np.ndarray,
    f_k: np.ndarray,
    config: LossConfig | None = None,
    d_signer: np.ndarray | None = None,
) -> DaeOutput:
    """L_sim + L_rec with gradients for the student encoder, decoder and ``f_q``.

    ``teacher`` supplies the key encoder; ``f_k`` and the key latents are
    treated as constants.  ``d_signer`` is an optional upstream gradient on
    the student signer half (e.g. from the sequence classifier) that is
    folded into the encoder backward pass.
    """
    config = config or LossConfig()
    act = config.activation
    f_q = np.atleast_2d(np.asarray(f_q, dtype=np.float64))
    f_k = np.atleast_2d(np.asarray(f_k, dtype=np.float64))
    n = f_q.shape[0]
    p = params

    z1 = f_q @ p["enc_w1"] + p["enc_b1"]
    a1 = _act(z1, act)
    hq = LatentPair.split(a1 @ p["enc_w2"] + p["enc_b2"])
    hk = encode(teacher, f_k, act)
    half = hq.signer.shape[-1]

    if config.use_sim:
        l_sim = loss_sim(hq, hk, config.margin)
        g_pos, _ = sim_pos_grad(hq.signer, hk.signer)
        g_neg, _ = sim_neg_grad(hq.background, hk.background, config.margin)
    else:
        l_sim, g_pos, g_neg = 0.0, 0.0, 0.0

    h_qk, h_kq = swap(hq, hk)
    if config.swap_orientation == "own_background":
        src_q, src_k = h_kq, h_qk
    else:
        src_q, src_k = h_qk, h_kq
    u = np.concatenate([src_q.join(), src_k.join()])
    zd = u @ p["dec_w1"] + p["dec_b1"]
    ad = _act(zd, act)
    f_hat = ad @ p["dec_w2"] + p["dec_b2"]
    target = np.concatenate([f_q, f_k])
    resid = f_hat - target
    scale = n if config.rec_reduction == "sum" else n * resid.shape[1]
    l_rec = float(np.sum(np.abs(resid)) / scale) if config.use_rec else 0.0

    # np.sign(0) == 0 gives the zero subgradient at the kink
    d_f_hat = np.sign(resid) / scale if config.use_rec else np.zeros_like(resid)
    g: Params = {}
    g["dec_w2"] = ad.T @ d_f_hat
    g["dec_b2"] = d_f_hat.sum(axis=0)
    d_zd = _act_back(d_f_hat @ p["dec_w2"].T, zd, act)
    g["dec_w1"] = u.T @ d_zd
    g["dec_b1"] = d_zd.sum(axis=0)
    d_u = d_zd @ p["dec_w1"].T
    d_uq, d_uk = d_u[:n], d_u[n:]

    d_hs = g_pos / n
    d_hb = g_neg / n
    if config.swap_orientation == "own_background":
        d_hs = d_hs + d_uk[:, :half]
        d_hb = d_hb + d_uq[:, half:]
    else:
        d_hs = d_hs + d_uq[:, :half]
        d_hb = d_hb + d_uk[:, half:]
    if d_signer is not None:
        d_hs = d_hs + d_signer
    d_h = np.concatenate([d_hs, d_hb], axis=1)

    g["enc_w2"] = a1.T @ d_h
    g["enc_b2"] = d_h.sum(axis=0)
    d_z1 = _act_back(d_h @ p["enc_w2"].T, z1, act)
    g["enc_w1"] = f_q.T @ d_z1
    g["enc_b1"] = d_z1.sum(axis=0)
    d_f_q = d_z1 @ p["enc_w1"].T
    if config.rec_target_grad:
        d_f_q = d_f_q - d_f_hat[:n]

    for k, v in g.items():
        if not np.all(np.isfinite(v)):
            raise FloatingPointError(f"non-finite gradient for {k}")
    return DaeOutput(l_sim, l_rec, hq, hk, {k: g[k] for k in params if k in g}, d_f_q)


# -- serialization ----------------------------------------------------------


def save_params(path: str | Path, params: Mapping[str, np.ndarray], config: LossConfig | None = None) -> None:
    """Write tensors to a little-endian binary file plus a JSON sidecar.

    Layout: ``u32 version, u32 count`` then for each tensor ``u32 ndim`` and
    ``ndim`` u32 dims; then all tensors as float64, row-major, in order.  The
    sidecar ``<path>.json`` records tensor names and the loss config.
    """
    path = Path(path)
    names = list(params)
    header = [FORMAT_VERSION, len(names)]
    for k in names:
        shape = np.shape(params[k])
        header += [len(shape), *shape]
    with open(path, "wb") as fh:
        fh.write(struct.pack(f"<{len(header)}I", *header))
        for k in names:
            fh.write(np.ascontiguousarray(params[k], dtype="<f8").tobytes())
    side = {"tensors": names, "loss_config": asdict(config or LossConfig())}
    Path(f"{path}.json").write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")


def load_params(path: str | Path) -> tuple[Params, LossConfig]:
    path = Path(path)
    raw = path.read_bytes()
    side = json.loads(Path(f"{path}.json").read_text())
    version, count = struct.unpack_from("<2I", raw, 0)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported parameter file version {version}")
    names = side["tensors"]
    if len(names) != count:
        raise ValueError("sidecar tensor list does not match the binary header")
    off = 8
    shapes = []
    for _ in range(count):
        (ndim,) = struct.unpack_from("<I", raw, off)
        off += 4
        shapes.append(struct.unpack_from(f"<{ndim}I", raw, off))
        off += 4 * ndim
    out: Params = {}
    for name, shape in zip(names, shapes):
        size = int(np.prod(shape, dtype=np.int64))
        out[name] = np.frombuffer(raw, dtype="<f8", count=size, offset=off).reshape(shape).astype(np.float64)
        off += 8 * size
    if off != len(raw):
        raise ValueError("trailing bytes in parameter file")
    return out, LossConfig(**side["loss_config"])
