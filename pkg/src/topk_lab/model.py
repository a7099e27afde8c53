"""Small softmax classifiers with hand-written forward and backward passes.

Two architectures:

* ``linear``: ``logits = x @ W1`` (no bias).
* ``hidden``: ``logits = relu(x @ W1 + b1) @ W2`` (bias on the hidden
  layer only).

Inputs are batched as ``(B, d_in)``; a single ``(d_in,)`` vector also works.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from topk_lab.core import RngStream, softmax_unchecked as softmax


class CheckpointFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    W1: np.ndarray
    W2: np.ndarray | None = None
    b1: np.ndarray | None = None

    @property
    def arch(self) -> str:
        return "linear" if self.W2 is None else "hidden"

    @property
    def hidden_units(self) -> int | None:
        return None if self.W2 is None else self.W1.shape[1]

    @property
    def n_classes(self) -> int:
        return (self.W1 if self.W2 is None else self.W2).shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self) if getattr(self, f.name) is not None}

    def ravel(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays().values()])

    def unravel(self, vec) -> "ModelParams":
        vec = np.asarray(vec, dtype=np.float64)
        out, i = {}, 0
        for name, a in self.arrays().items():
            out[name] = vec[i:i + a.size].reshape(a.shape).copy()
            i += a.size
        if i != vec.size:
            raise ValueError(f"expected {i} parameters, got {vec.size}")
        return replace(self, **out)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ModelParams):
            return NotImplemented
        a, b = self.arrays(), other.arrays()
        return a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)


@dataclass(frozen=True)
class ForwardTrace:
    inputs: np.ndarray
    logits: np.ndarray
    probs: np.ndarray
    hidden_pre: np.ndarray | None = None
    hidden_post: np.ndarray | None = None


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


def init_params(
    rng: RngStream, n_classes: int = 6, hidden: int | None = None, n_inputs: int = 2
) -> ModelParams:
    """Glorot-uniform weights; the hidden bias starts at zero."""
    gen = rng.generator
    if hidden is None:
        a = glorot_bound(n_inputs, n_classes)
        return ModelParams(gen.uniform(-a, a, (n_inputs, n_classes)))
    if hidden < 1:
        raise ValueError("hidden layer needs at least one unit")
    a1 = glorot_bound(n_inputs, hidden)
    W1 = gen.uniform(-a1, a1, (n_inputs, hidden))
    a2 = glorot_bound(hidden, n_classes)
    W2 = gen.uniform(-a2, a2, (hidden, n_classes))
    return ModelParams(W1, W2, np.zeros(hidden))


def zero_params(n_classes: int = 6, hidden: int | None = None, n_inputs: int = 2) -> ModelParams:
    if hidden is None:
        return ModelParams(np.zeros((n_inputs, n_classes)))
    return ModelParams(np.zeros((n_inputs, hidden)), np.zeros((hidden, n_classes)), np.zeros(hidden))


def forward(params: ModelParams, x) -> ForwardTrace:
    x = np.asarray(x, dtype=np.float64)
    if params.W2 is None:
        logits = x @ params.W1
        return ForwardTrace(x, logits, softmax(logits))
    pre = x @ params.W1 + params.b1
    post = np.maximum(pre, 0.0)
    logits = post @ params.W2
    return ForwardTrace(x, logits, softmax(logits), pre, post)


def backward(params: ModelParams, trace: ForwardTrace, grad_logits) -> ModelParams:
    """Gradients of a loss w.r.t. the parameters, given d loss / d logits.

    Batched gradients are summed over the batch; scale ``grad_logits`` to
    get a mean. The ReLU derivative at zero is taken as 0.
    """
    g = np.asarray(grad_logits, dtype=np.float64)
    x = trace.inputs
    if g.ndim == 1:
        g, x = g[None, :], x[None, :]
    if params.W2 is None:
        return ModelParams(x.T @ g)
    post = trace.hidden_post if trace.hidden_post.ndim == 2 else trace.hidden_post[None, :]
    pre = trace.hidden_pre if trace.hidden_pre.ndim == 2 else trace.hidden_pre[None, :]
    dW2 = post.T @ g
    dpre = (g @ params.W2.T) * (pre > 0.0)
    return ModelParams(x.T @ dpre, dW2, dpre.sum(axis=0))


def write_params(params: ModelParams, path) -> None:
    """Checkpoint as CSV. Each array is a ``name,rows,cols`` line followed by
    ``rows`` lines of comma-separated round-trip floats. Vectors are 1 x n."""
    lines = [f"# arch={params.arch}"]
    for name, a in params.arrays().items():
        m = a.reshape(1, -1) if a.ndim == 1 else a
        lines.append(f"{name},{m.shape[0]},{m.shape[1]}")
        lines += [",".join(repr(v) for v in row) for row in m.tolist()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_params(path) -> ModelParams:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("# arch="):
        raise CheckpointFormatError("line 1: missing '# arch=' header")
    arch = lines[0][len("# arch="):].strip()
    arrays, i = {}, 1
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        try:
            name, r, c = lines[i].split(",")
            r, c = int(r), int(c)
            rows = [[float(v) for v in lines[i + 1 + j].split(",")] for j in range(r)]
            m = np.array(rows, dtype=np.float64).reshape(r, c)
        except (ValueError, IndexError) as exc:
            raise CheckpointFormatError(f"line {i + 1}: {exc}") from None
        arrays[name] = m.ravel() if name == "b1" else m
        i += 1 + r
    if "W1" not in arrays or (arch == "hidden") != ("W2" in arrays):
        raise CheckpointFormatError(f"arrays {sorted(arrays)} inconsistent with arch {arch!r}")
    return ModelParams(**arrays)
