"""Central finite-difference checks for every hand-derived gradient.

Each component draws seeded random instances, compares the analytic gradient
with central differences and reports the worst relative error.  The error of
one tensor is norm-wise: ``|a - n| / max(|a|, |n|, FLOOR)``.

Instances closer than ``KINK_MARGIN`` to a non-differentiable point (ReLU,
L1, hinge or clamp) are redrawn, so the comparison is between smooth
functions.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from . import ctc, daecore
from .benchgen import derive_seed
from .daecore import LatentPair, LossConfig

log = logging.getLogger(__name__)

STEP = 1e-5
FLOOR = 1e-12
KINK_MARGIN = 1e-3
DEFAULT_THRESHOLD = 1e-4
END_TO_END_THRESHOLD = 1e-3


@dataclass
class ComponentResult:
    name: str
    instances: int
    max_rel_err: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.threshold


def rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    a = np.ravel(analytic)
    n = np.ravel(numeric)
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a), np.linalg.norm(n), FLOOR))


def numeric_grad(fn: Callable[[], float], x: np.ndarray, step: float = STEP, coords=None) -> np.ndarray:
    """Central differences of ``fn`` with respect to ``x``, perturbed in place.

    ``coords`` restricts the work to the given multi-indices (others stay 0).
    """
    out = np.zeros_like(x)
    for idx in np.ndindex(x.shape) if coords is None else coords:
        old = x[idx]
        x[idx] = old + step
        hi = fn()
        x[idx] = old - step
        lo = fn()
        x[idx] = old
        out[idx] = (hi - lo) / (2 * step)
    return out


def _tensor_errs(
    fn: Callable[[], float],
    tensors: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    rng: np.random.Generator | None = None,
    max_coords: int | None = None,
) -> float:
    """Worst per-tensor error; optionally on a random subset of coordinates."""
    worst = 0.0
    for k, x in tensors.items():
        if max_coords is None or x.size <= max_coords:
            worst = max(worst, rel_err(grads[k], numeric_grad(fn, x)))
            continue
        flat = rng.choice(x.size, size=max_coords, replace=False)
        coords = [np.unravel_index(i, x.shape) for i in flat]
        num = numeric_grad(fn, x, coords=coords)
        worst = max(worst, rel_err(np.ravel(grads[k])[flat], np.ravel(num)[flat]))
    return worst


# -- components -------------------------------------------------------------


def _pair(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    n, d = int(rng.integers(1, 5)), int(rng.integers(2, 9))
    return rng.normal(size=(n, d)), rng.normal(size=(n, d))


def check_sim_pos(rng: np.random.Generator) -> float:
    x1, x2 = _pair(rng)
    while np.any(np.abs(np.abs(daecore.cosine(x1, x2)) - 1) < KINK_MARGIN):
        x1, x2 = _pair(rng)
    g1, g2 = daecore.sim_pos_grad(x1, x2)

    def fn() -> float:
        return float(np.sum(daecore.sim_pos(x1, x2)))

    return _tensor_errs(fn, {"x1": x1, "x2": x2}, {"x1": g1, "x2": g2})


def check_sim_neg(rng: np.random.Generator) -> float:
    """Only the active (off-clamp) side of the hinge."""
    margin = float(rng.uniform(-0.5, 0.5))
    while True:
        x1, x2 = _pair(rng)
        # pull x2 toward x1 so most rows sit above the margin
        x2 = x1 + rng.uniform(0.1, 1.5) * x2
        c = daecore.cosine(x1, x2)
        if np.all(c - margin > KINK_MARGIN) and np.all(1 - c > KINK_MARGIN):
            break
    g1, g2 = daecore.sim_neg_grad(x1, x2, margin)

    def fn() -> float:
        return float(np.sum(daecore.sim_neg(x1, x2, margin)))

    return _tensor_errs(fn, {"x1": x1, "x2": x2}, {"x1": g1, "x2": g2})


def _dae_instance(rng: np.random.Generator, config: LossConfig):
    D = 2 * int(rng.integers(2, 5))
    D_h = 2 * int(rng.integers(1, 4))
    n = int(rng.integers(1, 4))
    params = daecore.init_dae(D, D_h, rng)
    teacher = {k: v + rng.normal(0, 0.2, v.shape) for k, v in params.items()}
    return params, teacher, rng.normal(size=(n, D)), rng.normal(size=(n, D))


def _near_kinks(params, teacher, f_q, f_k, config: LossConfig) -> bool:
    """True if any ReLU input, L1 residual, hinge or clamp sits within the margin."""
    z1 = f_q @ params["enc_w1"] + params["enc_b1"]
    hq = LatentPair.split(np.maximum(z1, 0) @ params["enc_w2"] + params["enc_b2"])
    hk = daecore.encode(teacher, f_k)
    h_qk, h_kq = daecore.swap(hq, hk)
    src = (h_kq, h_qk) if config.swap_orientation == "own_background" else (h_qk, h_kq)
    u = np.concatenate([s.join() for s in src])
    zd = u @ params["dec_w1"] + params["dec_b1"]
    resid = np.maximum(zd, 0) @ params["dec_w2"] + params["dec_b2"] - np.concatenate([f_q, f_k])
    near = [np.abs(z1), np.abs(zd)]
    if config.use_rec:
        near.append(np.abs(resid))
    if config.use_sim:
        cb = daecore.cosine(hq.background, hk.background)
        cs = daecore.cosine(hq.signer, hk.signer)
        near += [np.abs(cb - config.margin), 1 - np.abs(cb), 1 - np.abs(cs)]
    return min(float(np.min(a)) for a in near) < KINK_MARGIN


def _check_dae(rng: np.random.Generator, config: LossConfig) -> float:
    while True:
        params, teacher, f_q, f_k = _dae_instance(rng, config)
        try:
            if not _near_kinks(params, teacher, f_q, f_k, config):
                break
        except daecore.DegenerateVectorError:
            continue
    out = daecore.dae_losses_and_grads(params, teacher, f_q, f_k, config)
    tensors = dict(params, f_q=f_q)
    grads = dict(out.grads, f_q=out.d_f_q)

    def fn() -> float:
        o = daecore.dae_losses_and_grads(params, teacher, f_q, f_k, config)
        return o.l_sim + o.l_rec

    return _tensor_errs(fn, tensors, grads)


def check_loss_sim(rng: np.random.Generator) -> float:
    margin = float(rng.uniform(-0.5, 0.5))
    return _check_dae(rng, LossConfig(margin=margin, use_rec=False))


def check_loss_rec(rng: np.random.Generator) -> float:
    reduction = "sum" if rng.random() < 0.5 else "mean"
    return _check_dae(rng, LossConfig(use_sim=False, rec_reduction=reduction))


def check_ctc(rng: np.random.Generator) -> float:
    V = int(rng.integers(2, 6))
    T = int(rng.integers(1, 8))
    while True:
        target = [int(t) for t in rng.integers(1, V, size=int(rng.integers(0, 4)))]
        if ctc.min_frames(target) <= T:
            break
    logits = rng.normal(0, 2, size=(T, V))
    grad = ctc.ctc_grad(logits, target)

    def fn() -> float:
        return ctc.ctc_loss(logits, target)

    return rel_err(grad, numeric_grad(fn, logits))


E2E_COORDS = 8


def check_end_to_end(rng: np.random.Generator) -> float:
    """Full toy loss (CTC + DAE terms) on a one-video micro configuration.

    Each tensor is differenced on ``E2E_COORDS`` random coordinates to keep
    the suite fast; the unit checks cover every coordinate.
    """
    from .toytrain import model

    shape = model.ModelShape(frame_size=4, vocab=2, hidden=3, feat_dim=4, latent_dim=4, dae=True, conv_channels=1)
    config = LossConfig(margin=float(rng.uniform(-0.5, 0.5)))
    while True:
        T = int(rng.integers(3, 6))
        target = [int(rng.integers(1, 3))]
        params = model.init_params(shape, rng)
        teacher = {k: v + rng.normal(0, 0.1, v.shape) for k, v in params.items()}
        student_frames = [rng.uniform(0, 1, (T, 4, 4, 3))]
        teacher_frames = [rng.uniform(0, 1, (T, 4, 4, 3))]
        f_q, cache = model._features(params, model.preprocess(student_frames[0]))
        f_k = model.features(teacher, model.preprocess(teacher_frames[0]))
        try:
            kinked = _near_kinks(params, teacher, f_q, f_k, config)
        except daecore.DegenerateVectorError:
            continue
        if not kinked and min(np.min(np.abs(cache.zc)), np.min(np.abs(cache.z1))) >= KINK_MARGIN:
            break
    _, grads = model.loss_and_grads(params, teacher, student_frames, teacher_frames, [target], config)

    def fn() -> float:
        return model.loss_and_grads(params, teacher, student_frames, teacher_frames, [target], config)[0].total

    return _tensor_errs(fn, params, grads, rng, E2E_COORDS)


COMPONENTS: dict[str, tuple[Callable[[np.random.Generator], float], float]] = {
    "sim_pos": (check_sim_pos, DEFAULT_THRESHOLD),
    "sim_neg": (check_sim_neg, DEFAULT_THRESHOLD),
    "loss_sim": (check_loss_sim, DEFAULT_THRESHOLD),
    "loss_rec": (check_loss_rec, DEFAULT_THRESHOLD),
    "ctc_grad": (check_ctc, DEFAULT_THRESHOLD),
    "end_to_end": (check_end_to_end, END_TO_END_THRESHOLD),
}


def run_suite(
    seed: int = 0,
    instances: int = 100,
    threshold: float | None = None,
    components: tuple[str, ...] | None = None,
) -> list[ComponentResult]:
    """Run each component over ``instances`` seeded draws.

    ``threshold`` overrides the per-component defaults; the end-to-end
    tolerance stays ten times looser than the unit checks.
    """
    results = []
    for name in components or tuple(COMPONENTS):
        check, default = COMPONENTS[name]
        limit = default if threshold is None else (threshold * 10 if name == "end_to_end" else threshold)
        rng = np.random.default_rng(derive_seed(seed, "gradcheck", name))
        t0 = time.perf_counter()
        worst = max(check(rng) for _ in range(instances))
        log.info("%s: max rel err %.3e over %d instances (%.1f s)", name, worst, instances, time.perf_counter() - t0)
        results.append(ComponentResult(name, instances, worst, limit))
    return results
