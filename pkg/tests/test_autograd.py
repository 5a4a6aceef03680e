import numpy as np
import pytest

from conftest import fd_grad
from dcfnet import autograd as ag
from dcfnet.autograd import GraphConsumedError, NonFiniteError, Tensor, no_grad


def leaf(a):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=True)


def test_sigmoid_derivative_at_zero():
    x = leaf(0.0)
    x.sigmoid().backward()
    assert x.grad == pytest.approx(0.25, abs=1e-15)


def test_product_rule(rng):
    x, y = leaf(rng.standard_normal(5)), leaf(rng.standard_normal(5))
    (x * y).sum().backward()
    np.testing.assert_array_equal(x.grad, y.data)
    np.testing.assert_array_equal(y.grad, x.data)


def test_untouched_leaves_get_zero_gradient(rng):
    x, unused = leaf(rng.standard_normal(3)), leaf(rng.standard_normal(4))
    grads = ag.backward((x * x).sum(), {"x": x, "unused": unused})
    np.testing.assert_array_equal(grads["unused"], np.zeros(4))
    np.testing.assert_allclose(grads["x"], 2 * x.data)


def test_backward_requires_scalar(rng):
    x = leaf(rng.standard_normal(3))
    with pytest.raises(ValueError):
        ag.backward(x * 2.0, {"x": x})


def test_graph_consumed_twice_raises(rng):
    x = leaf(rng.standard_normal(3))
    y = (x.tanh() * 3.0).sum()
    y.backward()
    with pytest.raises(GraphConsumedError):
        y.backward()


def test_retain_graph_allows_second_pass(rng):
    x = leaf(rng.standard_normal(3))
    y = (x.exp()).sum()
    y.backward(retain_graph=True)
    y.backward()
    np.testing.assert_allclose(x.grad, 2 * np.exp(x.data))


def test_non_finite_is_an_error():
    with np.errstate(divide="ignore"), pytest.raises(NonFiniteError):
        leaf([0.0, 1.0]).log()
    with pytest.raises(NonFiniteError):
        Tensor([np.nan])


def test_no_grad_records_nothing(rng):
    x = leaf(rng.standard_normal(3))
    with no_grad():
        y = x * 2.0
    assert not y.requires_grad and y._parents == ()


def test_five_leaf_composite_matches_finite_differences(rng):
    leaves = [leaf(rng.standard_normal((3, 4))) for _ in range(4)] + [leaf(rng.standard_normal((4, 2)))]
    a, b, c, d, w = leaves

    def f():
        h = (a * b + c.tanh()) / (d * d + 1.0).sqrt()
        return ((h @ w).sigmoid() * ag.swapaxes(h[:, :2], 0, 1).sum(axis=0)[:, None]).exp().sum()

    f().backward()
    for t in leaves:
        num = fd_grad(lambda: f().item(), t.data)
        err = np.max(np.abs(t.grad - num) / np.maximum(np.maximum(abs(t.grad), abs(num)), 1e-12))
        assert err < 1e-6


def test_backward_is_linear(rng):
    x = leaf(rng.standard_normal(6))

    def f():
        return (x.tanh() * x).sum()

    def g():
        return (x * x * x).mean()

    gf = ag.backward(f(), {"x": x})["x"].copy()
    gg = ag.backward(g(), {"x": x})["x"].copy()
    combo = ag.backward(f() * 2.5 + g() * -0.75, {"x": x})["x"]
    np.testing.assert_allclose(combo, 2.5 * gf - 0.75 * gg, atol=1e-10)


def test_broadcasting_gradients_are_reduced(rng):
    x, b = leaf(rng.standard_normal((4, 3))), leaf(rng.standard_normal(3))
    (x + b).sum().backward()
    np.testing.assert_array_equal(b.grad, np.full(3, 4.0))


def test_getitem_and_concat_gradients(rng):
    x = leaf(rng.standard_normal((4, 5)))
    y = ag.concat([x[1:3], x[[0, 0]]], axis=0)
    (y * 2.0).sum().backward()
    expected = np.zeros((4, 5))
    expected[1:3] = 2.0
    expected[0] = 4.0
    np.testing.assert_array_equal(x.grad, expected)


def test_forward_ops_deterministic(rng):
    a = rng.standard_normal((8, 8))
    outs = [(Tensor(a) @ Tensor(a)).tanh().data for _ in range(2)]
    np.testing.assert_array_equal(outs[0], outs[1])
