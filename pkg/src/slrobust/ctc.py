"""Connectionist Temporal Classification loss in log space.

Logits are ``(T, V)`` unnormalized scores with the blank at index 0.  Targets
are sequences of integer labels in ``[1, V - 1]``.
"""

from __future__ import annotations

import itertools
from typing import Sequence

import numpy as np
from scipy.special import log_softmax, logsumexp

BLANK = 0
BRUTE_FORCE_LIMIT = 10**6

__all__ = [
    "BLANK",
    "CTCInfeasibleError",
    "brute_force_ctc",
    "collapse",
    "ctc_grad",
    "ctc_loss",
    "ctc_loss_and_grad",
    "greedy_decode",
    "min_frames",
]


class CTCInfeasibleError(ValueError):
    """The target cannot be emitted in the available number of frames."""


def min_frames(target: Sequence[int]) -> int:
    """Frames needed to emit ``target``: one per label plus a blank between repeats."""
    target = list(target)
    repeats = sum(1 for a, b in zip(target, target[1:]) if a == b)
    return len(target) + repeats


def _check(logits: np.ndarray, target: Sequence[int]) -> tuple[np.ndarray, list[int]]:
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[0] < 1 or logits.shape[1] < 2:
        raise ValueError(f"logits must be (T>=1, V>=2), got {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise ValueError("logits contain non-finite values")
    target = [int(t) for t in target]
    V = logits.shape[1]
    if any(t < 1 or t >= V for t in target):
        raise ValueError(f"target labels must lie in [1, {V - 1}]")
    need = min_frames(target)
    if need > logits.shape[0]:
        raise CTCInfeasibleError(f"target needs {need} frames but only {logits.shape[0]} given")
    return logits, target


def _extend(target: list[int]) -> tuple[np.ndarray, np.ndarray]:
    ext = [BLANK]
    for t in target:
        ext += [t, BLANK]
    ext = np.array(ext)
    # skip transition s-2 -> s allowed onto a label that differs from the label two back
    skip = np.zeros(len(ext), dtype=bool)
    skip[3::2] = ext[3::2] != ext[1:-2:2]
    return ext, skip


def _forward(logp: np.ndarray, ext: np.ndarray, skip: np.ndarray) -> np.ndarray:
    T, S = logp.shape[0], len(ext)
    alpha = np.full((T, S), -np.inf)
    alpha[0, 0] = logp[0, ext[0]]
    if S > 1:
        alpha[0, 1] = logp[0, ext[1]]
    for t in range(1, T):
        prev = alpha[t - 1]
        a = prev.copy()
        a[1:] = np.logaddexp(a[1:], prev[:-1])
        a[2:] = np.where(skip[2:], np.logaddexp(a[2:], prev[:-2]), a[2:])
        alpha[t] = a + logp[t, ext]
    return alpha


def _backward(logp: np.ndarray, ext: np.ndarray, skip: np.ndarray) -> np.ndarray:
    T, S = logp.shape[0], len(ext)
    beta = np.full((T, S), -np.inf)
    beta[-1, -1] = logp[-1, ext[-1]]
    if S > 1:
        beta[-1, -2] = logp[-1, ext[-2]]
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1]
        b = nxt.copy()
        b[:-1] = np.logaddexp(b[:-1], nxt[1:])
        # s may jump to s+2 when s+2 is a skippable label
        b[:-2] = np.where(skip[2:], np.logaddexp(b[:-2], nxt[2:]), b[:-2])
        beta[t] = b + logp[t, ext]
    return beta


def _log_likelihood(alpha: np.ndarray) -> float:
    return float(np.logaddexp(alpha[-1, -1], alpha[-1, -2]) if alpha.shape[1] > 1 else alpha[-1, -1])


def ctc_loss(logits: np.ndarray, target: Sequence[int]) -> float:
    """Negative log-probability that the frame labelling collapses to ``target``."""
    logits, target = _check(logits, target)
    ext, skip = _extend(target)
    alpha = _forward(log_softmax(logits, axis=1), ext, skip)
    return max(-_log_likelihood(alpha), 0.0)


def ctc_loss_and_grad(logits: np.ndarray, target: Sequence[int]) -> tuple[float, np.ndarray]:
    """Loss and its gradient with respect to the logits."""
    logits, target = _check(logits, target)
    logp = log_softmax(logits, axis=1)
    ext, skip = _extend(target)
    alpha = _forward(logp, ext, skip)
    beta = _backward(logp, ext, skip)
    ll = _log_likelihood(alpha)
    # alpha*beta double counts the emission at t
    ab = alpha + beta - logp[:, ext]
    T, V = logits.shape
    occupancy = np.full((T, V), -np.inf)
    for k in np.unique(ext):
        occupancy[:, k] = logsumexp(ab[:, ext == k], axis=1)
    grad = np.exp(logp) - np.exp(occupancy - ll)
    return max(-ll, 0.0), grad


def ctc_grad(logits: np.ndarray, target: Sequence[int]) -> np.ndarray:
    return ctc_loss_and_grad(logits, target)[1]


def collapse(path: Sequence[int]) -> list[int]:
    """Merge consecutive repeats, then drop blanks."""
    out = []
    prev = None
    for p in path:
        p = int(p)
        if p != prev and p != BLANK:
            out.append(p)
        prev = p
    return out


def greedy_decode(logits: np.ndarray) -> list[int]:
    # np.argmax returns the first (lowest) index among ties
    return collapse(np.argmax(np.asarray(logits), axis=1))


def brute_force_ctc(logits: np.ndarray, target: Sequence[int]) -> float:
    """Reference loss by enumerating every frame labelling."""
    logits = np.asarray(logits, dtype=np.float64)
    T, V = logits.shape
    if V**T > BRUTE_FORCE_LIMIT:
        raise ValueError(f"{V}^{T} paths exceeds the enumeration guard")
    logp = log_softmax(logits, axis=1)
    target = [int(t) for t in target]
    terms = [
        logp[np.arange(T), list(path)].sum()
        for path in itertools.product(range(V), repeat=T)
        if collapse(path) == target
    ]
    if not terms:
        raise CTCInfeasibleError("no path collapses to the target")
    return max(-float(logsumexp(terms)), 0.0)
