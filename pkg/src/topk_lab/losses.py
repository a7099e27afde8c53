"""Cross entropy, top-k grouping loss and top-k transition loss.

Every loss takes logits ``s`` of shape ``(N,)`` or ``(B, N)`` and a target
that is either a class index (array of indices for a batch) or a full
label distribution of the same shape as ``s``. Gradients are with respect
to the logits, through the softmax.

The grouping loss merges the current top-k classes into one class. Its
membership is read off the forward pass and held fixed when
differentiating, so the gradient is that of the smooth piece the input
lies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from topk_lab.core import InvalidInputError, _as_logits, log_softmax, topk_mask

_SUM_TOL = 1e-9


@dataclass(frozen=True)
class LossResult:
    """Loss value (nats) and its gradient with respect to the logits.

    For batched input ``value`` has shape ``(B,)`` and ``grad_logits``
    ``(B, N)``; for a single vector they are a float and an ``(N,)`` array.
    ``underflow`` counts target-weighted entries whose probability
    underflowed to zero in float64.
    """

    value: float | np.ndarray
    grad_logits: np.ndarray
    underflow: int = 0


@dataclass(frozen=True)
class KlDecomposition:
    kl: float
    target_entropy: float

    @property
    def total(self) -> float:
        return self.kl + self.target_entropy


def one_hot(y, n_classes: int) -> np.ndarray:
    y = np.asarray(y)
    if np.any(y < 0) or np.any(y >= n_classes):
        raise InvalidInputError(f"class index out of range [0, {n_classes})")
    return np.eye(n_classes)[y]


def as_target(t, shape: tuple[int, ...]) -> np.ndarray:
    """Validate ``t`` as a label distribution matching logits ``shape``.

    Integer labels are expanded to one-hot rows.
    """
    arr = np.asarray(t)
    if np.issubdtype(arr.dtype, np.integer) and arr.shape == shape[:-1]:
        return one_hot(arr, shape[-1])
    arr = arr.astype(np.float64)
    if arr.shape != shape:
        raise InvalidInputError(f"target shape {arr.shape} does not match logits {shape}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise InvalidInputError("target weights must be finite and non-negative")
    if np.any(np.abs(arr.sum(axis=-1) - 1.0) > _SUM_TOL):
        raise InvalidInputError("target weights must sum to 1")
    return arr


def _check_k(k: int, n: int) -> None:
    if not (isinstance(k, (int, np.integer)) and 1 <= k <= n - 1):
        raise InvalidInputError(f"k must be an integer in [1, {n - 1}], got {k!r}")


def _prepare(s, t):
    s = _as_logits(s)
    t = as_target(t, s.shape)
    return (s, t) + _softmax_parts(s, t)


def _softmax_parts(s, t):
    shifted = s - s.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    z = e.sum(axis=-1, keepdims=True)
    q = e / z
    logq = shifted - np.log(z)
    underflow = int(np.count_nonzero((q == 0.0) & (t > 0.0)))
    return q, logq, underflow


def _out(value: np.ndarray, grad: np.ndarray, single: bool, underflow: int) -> LossResult:
    if single:
        return LossResult(float(value), grad, underflow)
    return LossResult(value, grad, underflow)


def _ce_parts(t, q, logq):
    value = -(t * logq).sum(axis=-1)
    grad = q * t.sum(axis=-1, keepdims=True) - t
    return value, grad


def _grouping_parts(t, q, logq, k):
    mask = topk_mask(q, k)
    mass = np.where(mask, q, 0.0).sum(axis=-1, keepdims=True)
    t_in = np.where(mask, t, 0.0).sum(axis=-1, keepdims=True)
    t_out = np.where(mask, 0.0, t)
    value = -t_in[..., 0] * np.log(mass[..., 0]) - (t_out * logq).sum(axis=-1)
    grad = q * (t_in + t_out.sum(axis=-1, keepdims=True)) - t_in * np.where(mask, q / mass, 0.0) - t_out
    return value, grad, mask, mass


def ce_loss(s, t) -> LossResult:
    """Cross entropy ``-sum_i t_i log q_i`` with ``q = softmax(s)``."""
    s, t, q, logq, uf = _prepare(s, t)
    value, grad = _ce_parts(t, q, logq)
    return _out(value, grad, s.ndim == 1, uf)


def grouping_loss(s, t, k: int) -> LossResult:
    """Cross entropy with the current top-k classes merged into one class.

    With ``G`` the top-k set of ``q = softmax(s)`` (ties to the lower index)::

        value = -(sum_{i in G} t_i) log(sum_{i in G} q_i) - sum_{i not in G} t_i log q_i

    ``k = 1`` reproduces :func:`ce_loss`.
    """
    s, t, q, logq, uf = _prepare(s, t)
    _check_k(k, s.shape[-1])
    value, grad, _, _ = _grouping_parts(t, q, logq, k)
    return _out(value, grad, s.ndim == 1, uf)


def transition_loss(s, t, k: int, differentiate_weights: bool = True) -> LossResult:
    """Blend ``(1 - S) * CE + S * grouping`` where ``S`` is the top-k mass.

    By default the gradient includes the dependence of ``S`` on the logits.
    With ``differentiate_weights=False`` the weights are treated as
    constants.
    """
    s, t, q, logq, uf = _prepare(s, t)
    _check_k(k, s.shape[-1])
    return _transition(s.ndim == 1, t, q, logq, uf, k, differentiate_weights)


def _transition(single, t, q, logq, uf, k, differentiate_weights):
    ce_v, ce_g = _ce_parts(t, q, logq)
    g_v, g_g, mask, mass = _grouping_parts(t, q, logq, k)
    w = mass[..., 0]
    value = (1.0 - w) * ce_v + w * g_v
    grad = (1.0 - mass) * ce_g + mass * g_g
    if differentiate_weights:
        dmass = np.where(mask, q, 0.0) - mass * q
        grad = grad + (g_v - ce_v)[..., None] * dmass
    return _out(value, grad, single, uf)


def topk_mass(s, k: int) -> np.ndarray:
    """Total softmax probability of the top-k classes, per row."""
    s = _as_logits(s)
    _check_k(k, s.shape[-1])
    q = np.exp(log_softmax(s))
    return np.where(topk_mask(q, k), q, 0.0).sum(axis=-1)


def ce_kl_decomposition(q, t) -> KlDecomposition:
    """Split cross entropy of ``q`` against ``t`` into ``KL(t||q) + H(t)``.

    Zero-weight target entries contribute nothing. If ``q`` is zero where
    ``t`` is positive, ``kl`` is ``math.inf``.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 1 or q.size < 2 or np.any(q < 0) or abs(q.sum() - 1.0) > _SUM_TOL:
        raise InvalidInputError("q must be a probability vector")
    t = as_target(t, q.shape)
    pos = t > 0
    if np.any(q[pos] == 0.0):
        return KlDecomposition(math.inf, float(-(t[pos] * np.log(t[pos])).sum()))
    tp, qp = t[pos], q[pos]
    entropy = float(-(tp * np.log(tp)).sum())
    kl = float((tp * (np.log(tp) - np.log(qp))).sum())
    # rounding can push an exact zero slightly negative
    return KlDecomposition(max(kl, 0.0), entropy)


def batch_loss(name: str, s: np.ndarray, t: np.ndarray, k: int, differentiate_weights: bool = True) -> LossResult:
    """Unchecked batched evaluation for the training loop.

    ``s`` must be finite ``(B, N)`` logits and ``t`` a valid ``(B, N)`` target
    array; no validation is done.
    """
    q, logq, uf = _softmax_parts(s, t)
    if name == "ce":
        value, grad = _ce_parts(t, q, logq)
        return LossResult(value, grad, uf)
    if name == "grouping":
        value, grad, _, _ = _grouping_parts(t, q, logq, k)
        return LossResult(value, grad, uf)
    return _transition(False, t, q, logq, uf, k, differentiate_weights)


LOSSES = {
    "ce": lambda s, t, k: ce_loss(s, t),
    "grouping": grouping_loss,
    "transition": transition_loss,
}


def loss_by_name(name: str):
    """Loss callable ``f(s, t, k)`` for ``'ce'``, ``'grouping'`` or ``'transition'``."""
    try:
        return LOSSES[name]
    except KeyError:
        raise InvalidInputError(f"unknown loss {name!r}; expected one of {sorted(LOSSES)}") from None
