"""Shared numerical primitives: softmax, deterministic ranking, seeded
random streams and a central finite-difference oracle."""

from __future__ import annotations

from typing import Callable

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN_GAMMA = 0x9E3779B97F4A7C15


class InvalidInputError(ValueError):
    """Raised for non-finite or malformed numeric inputs and bad arguments."""


class OracleFailureError(ArithmeticError):
    """Raised when the finite-difference oracle hits a non-finite value."""


def _as_logits(s) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    if s.ndim not in (1, 2) or s.shape[-1] < 2:
        raise InvalidInputError(f"logits must have shape (N,) or (B, N) with N >= 2, got {s.shape}")
    if not np.all(np.isfinite(s)):
        raise InvalidInputError("logits contain non-finite entries")
    return s


def log_softmax(s) -> np.ndarray:
    """Row-wise log-softmax with max subtraction. Accepts (N,) or (B, N)."""
    s = _as_logits(s)
    shifted = s - s.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(s) -> np.ndarray:
    """Row-wise softmax of logits with shape (N,) or (B, N).

    The maximum logit is subtracted before exponentiation, so inputs such as
    ``(1000, 0)`` do not overflow.
    """
    return softmax_unchecked(_as_logits(s))


def softmax_unchecked(s: np.ndarray) -> np.ndarray:
    # non-finite logits propagate as nan instead of raising
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def rank_descending(q) -> np.ndarray:
    """Indices ordering ``q`` from largest to smallest along the last axis.

    Ties keep their original order, so the lower class index ranks first.
    """
    q = np.asarray(q, dtype=np.float64)
    # stable sort of -q keeps equal entries in index order
    return np.argsort(-q, axis=-1, kind="stable")


def rank_positions(q) -> np.ndarray:
    """Inverse of :func:`rank_descending`: position of each class in the ranking."""
    order = rank_descending(q)
    pos = np.empty_like(order)
    np.put_along_axis(pos, order, np.broadcast_to(np.arange(order.shape[-1]), order.shape), axis=-1)
    return pos


def topk_mask(q, k: int) -> np.ndarray:
    """Boolean mask of the k top-ranked classes (same shape as ``q``)."""
    q = np.asarray(q, dtype=np.float64)
    top = rank_descending(q)[..., :k]
    mask = np.zeros(q.shape, dtype=bool)
    if q.ndim == 1:
        mask[top] = True
    else:
        mask[np.arange(q.shape[0])[:, None], top] = True
    return mask


def finite_diff_gradient(
    f: Callable[[np.ndarray], float], s, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``s`` (any array shape)."""
    if not h > 0:
        raise InvalidInputError(f"step must be positive, got {h}")
    s = np.array(s, dtype=np.float64)
    grad = np.empty_like(s)
    flat = s.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(s))
        flat[i] = orig - h
        fm = float(f(s))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise OracleFailureError(f"non-finite evaluation at coordinate {i}: f+={fp}, f-={fm}")
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def splitmix64(x: int) -> int:
    """One splitmix64 output for state ``x`` (the state is advanced first)."""
    z = (x + _GOLDEN_GAMMA) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, stream: int) -> int:
    """Sub-seed number ``stream`` of ``seed``.

    This is output ``stream + 1`` of a splitmix64 sequence started at
    ``seed``, i.e. ``splitmix64(seed + stream * gamma)``.
    """
    return splitmix64((seed + stream * _GOLDEN_GAMMA) & _MASK64)


class RngStream:
    """Seeded random stream backed by numpy's PCG64 bit generator.

    Same seed gives the same sequence on every platform. The caller owns the
    stream; nothing here is global.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.generator = np.random.Generator(np.random.PCG64(self.seed & _MASK64))

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self.generator.uniform(low, high, size)

    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed})"


def seeded_rng(seed: int) -> RngStream:
    return RngStream(seed)
