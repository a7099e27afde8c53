import numpy as np
import pytest

from topk_lab.core import seeded_rng
from topk_lab.gradcheck import check_param_gradients
from topk_lab.model import (
    CheckpointFormatError,
    ModelParams,
    backward,
    forward,
    glorot_bound,
    init_params,
    read_params,
    write_params,
    zero_params,
)


def test_linear_init_shape_and_determinism():
    a = init_params(seeded_rng(3))
    assert a.W1.shape == (2, 6) and a.W2 is None and a.arch == "linear"
    assert a == init_params(seeded_rng(3))
    assert a != init_params(seeded_rng(4))


def test_hidden_init_shapes():
    p = init_params(seeded_rng(0), hidden=8)
    assert (p.W1.shape, p.W2.shape, p.b1.shape) == ((2, 8), (8, 6), (8,))
    assert p.hidden_units == 8 and p.n_classes == 6


def test_init_within_glorot_bound():
    w = np.concatenate([init_params(seeded_rng(s), hidden=32).W2.ravel() for s in range(60)])
    assert w.size >= 10_000
    assert np.all(np.abs(w) <= glorot_bound(32, 6))


def test_zero_weights_uniform():
    x = np.array([[0.3, -0.9], [1.0, 0.0]])
    for p in (zero_params(), zero_params(hidden=4)):
        np.testing.assert_allclose(forward(p, x).probs, 1 / 6, atol=1e-15)


def test_linear_logits_definition(rng):
    p = init_params(seeded_rng(1))
    x = rng.normal(size=2)
    np.testing.assert_array_equal(forward(p, x).logits, p.W1.T @ x)


def test_dead_relu_gives_uniform():
    p = init_params(seeded_rng(2), hidden=5)
    p = ModelParams(p.W1, p.W2, np.full(5, -10.0))
    tr = forward(p, np.array([0.6, 0.8]))
    assert np.all(tr.hidden_pre < 0)
    np.testing.assert_array_equal(tr.hidden_post, 0.0)
    np.testing.assert_allclose(tr.probs, 1 / 6, atol=1e-15)


def test_zero_upstream_gradient():
    p = init_params(seeded_rng(0), hidden=3)
    tr = forward(p, np.array([[0.0, 1.0], [1.0, 0.0]]))
    g = backward(p, tr, np.zeros((2, 6)))
    assert all(np.all(a == 0) for a in g.arrays().values())


def test_linear_outer_product(rng):
    p = init_params(seeded_rng(0))
    x = rng.normal(size=2)
    g = rng.normal(size=6)
    np.testing.assert_allclose(backward(p, forward(p, x), g).W1, np.outer(x, g))


def test_relu_derivative_at_zero_is_zero():
    W1 = np.array([[1.0], [0.0]])
    p = ModelParams(W1, np.ones((1, 3)), np.array([0.0]))
    tr = forward(p, np.array([0.0, 1.0]))
    assert tr.hidden_pre[0] == 0.0
    g = backward(p, tr, np.array([1.0, -2.0, 1.0]))
    assert g.W1.sum() == 0.0 and g.b1[0] == 0.0


@pytest.mark.parametrize("hidden", [None, 2, 8])
@pytest.mark.parametrize("loss", ["ce", "grouping", "transition"])
def test_param_gradients(hidden, loss):
    report = check_param_gradients(loss, hidden, n_instances=100, seed=11)
    assert report.passed, report.line()


def test_forward_has_no_side_effects(rng):
    p = init_params(seeded_rng(0), hidden=4)
    before = p.ravel().copy()
    x = rng.normal(size=(5, 2))
    a = forward(p, x).probs
    b = forward(p, x).probs
    assert np.array_equal(a, b) and np.array_equal(p.ravel(), before)


@pytest.mark.parametrize("hidden", [None, 6])
def test_checkpoint_round_trip(tmp_path, hidden):
    p = init_params(seeded_rng(7), hidden=hidden)
    p = p.unravel(p.ravel() * np.pi)
    write_params(p, tmp_path / "m.csv")
    q = read_params(tmp_path / "m.csv")
    assert q == p and q.ravel().tobytes() == p.ravel().tobytes()


def test_checkpoint_errors(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("W1,2,6\n")
    with pytest.raises(CheckpointFormatError):
        read_params(path)
    path.write_text("# arch=linear\nW1,2,2\n1.0,2.0\n")
    with pytest.raises(CheckpointFormatError):
        read_params(path)
