"""Finite-difference checks of the analytic loss and model gradients.

Relative error is ``||analytic - numeric||_2 / max(||analytic||_2, ||numeric||_2)``.
Instances whose top-k boundary gap ``q[k] - q[k+1]`` (sorted) is below
``min_gap`` are skipped, as are hidden units within ``min_gap`` of the
ReLU kink; there the piecewise gradient and a difference quotient
legitimately disagree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from topk_lab.core import finite_diff_gradient, seeded_rng, softmax
from topk_lab.losses import batch_loss, ce_loss, grouping_loss, one_hot, transition_loss
from topk_lab.model import backward, forward, init_params

LOSS_NAMES = ("ce", "grouping", "transition")


def _loss(name: str, s, t, k: int):
    if name == "ce":
        return ce_loss(s, t)
    if name == "grouping":
        return grouping_loss(s, t, k)
    return transition_loss(s, t, k)


def relative_error(a, b) -> float:
    a, b = np.ravel(a), np.ravel(b)
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if denom == 0 else float(np.linalg.norm(a - b) / denom)


def boundary_gap(q, k: int) -> np.ndarray:
    srt = -np.sort(-np.atleast_2d(q), axis=-1)
    return srt[:, k - 1] - srt[:, k]


def random_target(gen: np.random.Generator, n: int, soft: bool):
    if soft:
        return gen.dirichlet(np.ones(n))
    return int(gen.integers(n))


@dataclass
class CheckReport:
    name: str
    checked: int
    skipped: int
    max_rel_error: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.checked > 0 and self.max_rel_error <= self.tol

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status} {self.name}: {self.checked} instances, {self.skipped} skipped, "
            f"max rel err {self.max_rel_error:.2e} (tol {self.tol:.0e})"
        )


def check_logit_gradients(
    loss: str,
    n_instances: int = 100,
    n_classes: int = 6,
    k: int = 2,
    h: float = 1e-5,
    tol: float = 1e-5,
    min_gap: float = 1e-3,
    seed: int = 0,
    soft_fraction: float = 0.5,
) -> CheckReport:
    """Compare d loss / d logits with central differences on random logits."""
    gen = np.random.default_rng(seed)
    worst, checked, skipped = 0.0, 0, 0
    while checked < n_instances:
        s = gen.normal(0.0, 2.0, n_classes)
        if loss != "ce" and boundary_gap(softmax(s), k)[0] < min_gap:
            skipped += 1
            continue
        t = random_target(gen, n_classes, gen.random() < soft_fraction)
        analytic = _loss(loss, s, t, k).grad_logits
        numeric = finite_diff_gradient(lambda z: _loss(loss, z, t, k).value, s, h)
        worst = max(worst, relative_error(analytic, numeric))
        checked += 1
    return CheckReport(f"logits/{loss}", checked, skipped, worst, tol)


def check_param_gradients(
    loss: str,
    hidden: int | None = None,
    n_instances: int = 100,
    n_classes: int = 6,
    k: int = 2,
    batch: int = 3,
    h: float = 1e-5,
    tol: float = 1e-5,
    min_gap: float = 1e-3,
    seed: int = 0,
) -> CheckReport:
    """Compare d (batch-mean loss) / d params with central differences."""
    gen = np.random.default_rng(seed)
    worst, checked, skipped = 0.0, 0, 0
    i = 0
    while checked < n_instances:
        i += 1
        params = init_params(seeded_rng(seed * 100_003 + i), n_classes, hidden)
        # scale weights up so the softmax is far from uniform
        params = params.unravel(params.ravel() * 2.0 + gen.normal(0.0, 0.3, params.ravel().size))
        theta = gen.uniform(0.0, 2 * np.pi, batch)
        x = np.column_stack([np.cos(theta), np.sin(theta)])
        y = gen.integers(n_classes, size=batch)
        trace = forward(params, x)
        near_kink = trace.hidden_pre is not None and np.min(np.abs(trace.hidden_pre)) < min_gap
        if near_kink or (loss != "ce" and np.min(boundary_gap(trace.probs, k)) < min_gap):
            skipped += 1
            continue
        res = _loss(loss, trace.logits, y, k)
        analytic = backward(params, trace, res.grad_logits / batch).ravel()

        targets = one_hot(y, n_classes)

        def objective(vec):
            p = params.unravel(vec)
            return float(np.mean(batch_loss(loss, forward(p, x).logits, targets, k).value))

        numeric = finite_diff_gradient(objective, params.ravel(), h)
        worst = max(worst, relative_error(analytic, numeric))
        checked += 1
    arch = "linear" if hidden is None else f"hidden{hidden}"
    return CheckReport(f"params/{arch}/{loss}", checked, skipped, worst, tol)


def run_all(n_instances: int = 100, seed: int = 0) -> list[CheckReport]:
    reports = [check_logit_gradients(name, n_instances, seed=seed) for name in LOSS_NAMES]
    for hidden in (None, 2, 8):
        reports += [check_param_gradients(name, hidden, n_instances, seed=seed) for name in LOSS_NAMES]
    return reports
