"""Top-k prediction sets, top-k errors and dataset accuracy curves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from topk_lab.core import InvalidInputError, rank_descending


@dataclass(frozen=True)
class AccuracyCurve:
    """Top-k accuracy for k = 1..N-1; ``per_k[k - 1]`` is top-k accuracy."""

    per_k: np.ndarray

    def at(self, k: int) -> float:
        return float(self.per_k[k - 1])

    @property
    def top1(self) -> float:
        return self.at(1)


def _check_prob(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 1 or q.size < 2:
        raise InvalidInputError(f"expected a probability vector of length >= 2, got shape {q.shape}")
    return q


def _check_k(k: int, n: int) -> None:
    if not 1 <= k <= n - 1:
        raise InvalidInputError(f"k must be in [1, {n - 1}], got {k}")


def topk_prediction(q, k: int) -> frozenset[int]:
    q = _check_prob(q)
    _check_k(k, q.size)
    return frozenset(int(i) for i in rank_descending(q)[:k])


def topk_error(q, y: int, k: int) -> int:
    """1 if class ``y`` is outside the top-k prediction of ``q``, else 0."""
    q = _check_prob(q)
    if not 0 <= y < q.size:
        raise InvalidInputError(f"label {y} out of range [0, {q.size})")
    return int(y not in topk_prediction(q, k))


def label_ranks(probs, labels) -> np.ndarray:
    """Rank position (0 = top) of each sample's label under the index tie-break.

    A class outranks the label if its probability is larger, or equal with
    a lower index.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    qy = np.take_along_axis(probs, labels[:, None], axis=1)
    idx = np.arange(probs.shape[1])
    above = (probs > qy) | ((probs == qy) & (idx[None, :] < labels[:, None]))
    return above.sum(axis=1)


def accuracy_curve(predictions, labels) -> AccuracyCurve:
    """Top-k accuracy of ``predictions`` (M, N) against integer ``labels`` (M,).

    Correct predictions are counted as integers, so the result is exact and
    independent of how samples are partitioned.
    """
    probs = np.asarray(predictions, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.ndim != 2 or probs.shape[0] == 0:
        raise InvalidInputError("predictions must be a nonempty (M, N) array")
    if labels.shape != (probs.shape[0],):
        raise InvalidInputError("labels must have one entry per prediction")
    n = probs.shape[1]
    if n < 2 or np.any(labels < 0) or np.any(labels >= n):
        raise InvalidInputError("labels out of range")
    ranks = label_ranks(probs, labels)
    counts = np.bincount(ranks, minlength=n).cumsum()[: n - 1]
    return AccuracyCurve(counts / probs.shape[0])
