import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fftat import numerics as nx
from fftat.numerics import Tensor, grad_check

SEEDS = [0, 1, 2]


def param(rng, *shape, scale=1.0):
    return Tensor(rng.normal(0, scale, size=shape), requires_grad=True)


def test_softmax_uniform():
    out = nx.softmax(Tensor([0.0, 0.0, 0.0]))
    np.testing.assert_allclose(out.data, [1 / 3] * 3, rtol=0, atol=1e-7)


def test_matmul_identity(rng, f64):
    a = Tensor(rng.normal(size=(2, 2)))
    assert np.array_equal(nx.matmul(Tensor(np.eye(2)), a).data, a.data)


@pytest.mark.parametrize("prec,tol", [("f32", 1e-6), ("f64", 1e-12)])
def test_softmax_rows_sum_to_one(prec, tol):
    with nx.precision(prec):
        x = Tensor(np.random.default_rng(0).normal(0, 5, size=(50, 17)))
        y = nx.softmax(x).data
    assert (y >= 0).all()
    assert np.abs(y.sum(-1) - 1).max() <= tol


def test_shape_mismatch_names_op_and_shapes():
    with pytest.raises(nx.ShapeError, match=r"matmul.*\(2, 3\).*\(2, 3\)"):
        nx.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(nx.ShapeError, match="add"):
        nx.add(Tensor(np.ones(3)), Tensor(np.ones(4)))


# every differentiable op, checked against central differences on three seeds
OPS = {
    "add": lambda r: (lambda a, b: (a + b).sum(), [param(r, 3, 4), param(r, 4)]),
    "sub": lambda r: (lambda a, b: ((a - b) * (a - b)).sum(), [param(r, 3, 4), param(r, 1, 4)]),
    "mul": lambda r: (lambda a, b: (a * b).sum(), [param(r, 2, 3), param(r, 3)]),
    "div": lambda r: (lambda a, b: (a / b).sum(), [param(r, 2, 3), Tensor(r.uniform(1, 2, (2, 3)), True)]),
    "matmul": lambda r: (lambda a, b: (a @ b).sum(), [param(r, 2, 3, 4), param(r, 4, 5)]),
    "bmm": lambda r: (lambda a, b: ((a @ b) * (a @ b)).sum(), [param(r, 2, 3, 4), param(r, 2, 4, 2)]),
    "softmax": lambda r: (lambda a, w: (nx.softmax(a) * w).sum(), [param(r, 3, 5), Tensor(r.normal(size=(3, 5)))]),
    "log_softmax": lambda r: (lambda a, w: (nx.log_softmax(a) * w).sum(), [param(r, 3, 5), Tensor(r.normal(size=(3, 5)))]),
    "layer_norm": lambda r: (lambda x, g, b, w: (nx.layer_norm(x, g, b) * w).sum(),
                             [param(r, 4, 6), param(r, 6), param(r, 6), Tensor(r.normal(size=(4, 6)))]),
    "gelu": lambda r: (lambda a: nx.gelu(a).sum(), [param(r, 10, scale=2.0)]),
    "relu": lambda r: (lambda a: (nx.relu(a) * a).sum(), [param(r, 10)]),
    "sigmoid": lambda r: (lambda a: nx.sigmoid(a).sum(), [param(r, 10, scale=3.0)]),
    "exp": lambda r: (lambda a: nx.exp(a).sum(), [param(r, 6)]),
    "log": lambda r: (lambda a: nx.log(a).sum(), [Tensor(r.uniform(0.5, 2, 6), True)]),
    "mean": lambda r: (lambda a: (a.mean(axis=1) * a.mean(axis=1)).sum(), [param(r, 3, 4)]),
    "concat": lambda r: (lambda a, b: (nx.concat([a, b], 1) * nx.concat([b, a], 1)).sum(),
                         [param(r, 2, 3), param(r, 2, 3)]),
    "slice": lambda r: (lambda a: (a[:, 1:] * a[:, :-1]).sum() + (a[0] * a[1]).sum(), [param(r, 3, 4)]),
    "transpose": lambda r: (lambda a, b: (a.transpose(1, 0, 2) * b).sum(), [param(r, 2, 3, 4), param(r, 3, 2, 4)]),
    "reshape": lambda r: (lambda a, b: (a.reshape(6, 2) @ b).sum(), [param(r, 3, 4), param(r, 2, 3)]),
    "clip": lambda r: (lambda a: (nx.clip(a, -0.5, 0.5) * a).sum(), [param(r, 10)]),
}


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients(name, seed, f64):
    f, params = OPS[name](np.random.default_rng(seed))
    err = grad_check(lambda: f(*params), params, eps=1e-6)
    assert err <= 1e-6, f"{name}: {err}"


def test_grad_check_quadratic(f64):
    x = Tensor([1.0, 2.0], requires_grad=True)
    err = grad_check(lambda: (x * x).sum(), [x])
    x.grad = None
    (x * x).sum().backward()
    np.testing.assert_array_equal(x.grad, [2.0, 4.0])
    assert err <= 1e-9


def test_grad_check_bce_of_sigmoid_at_zero(f64):
    z = Tensor([0.0], requires_grad=True)

    def f():
        p = nx.sigmoid(z)
        return -(nx.log(p)).sum()  # label 1

    assert grad_check(f, [z], eps=1e-6) <= 1e-7
    z.grad = None
    f().backward()
    assert z.grad[0] == pytest.approx(-0.5, abs=1e-12)


def test_grad_check_rejects_nonfinite_param():
    x = Tensor([1.0, math.nan], requires_grad=True)
    with pytest.raises(nx.NonFiniteError, match="parameter 0"):
        grad_check(lambda: x.sum(), [x])


def test_grad_check_eps_range():
    x = Tensor([1.0], requires_grad=True)
    with pytest.raises(ValueError):
        grad_check(lambda: x.sum(), [x], eps=1e-2)


def test_stop_gradient(rng, f64):
    x = param(rng, 4)
    y = param(rng, 4)
    (nx.stop_gradient(x) * y).sum().backward()
    assert x.grad is None or not x.grad.any()
    np.testing.assert_array_equal(y.grad, x.data)


def test_stop_gradient_is_forward_exact(rng):
    x = param(rng, 3, 5)
    s = nx.stop_gradient(x)
    assert np.array_equal(s.data, x.data) and s.data.dtype == x.data.dtype


@pytest.mark.parametrize("lam", [0.0, 0.5, 1.0])
def test_gradient_reversal(lam, rng, f64):
    x = param(rng, 5)
    r = nx.gradient_reversal(x, lam)
    assert np.array_equal(r.data, x.data)
    r.sum().backward()
    np.testing.assert_array_equal(x.grad, np.full(5, -lam))


def test_gradient_reversal_rejects_negative():
    with pytest.raises(ValueError):
        nx.gradient_reversal(Tensor([1.0]), -1.0)


def test_gradient_reversal_flips_encoder_direction(f64):
    # 2-layer toy: encoder w1 feeds a discriminator w2; reversal flips the encoder grad only
    rng = np.random.default_rng(7)
    x = Tensor(rng.normal(size=(8, 3)))
    grads = {}
    for use_grl in (False, True):
        w1 = Tensor(rng.normal(size=(3, 4)) * 0 + np.arange(12).reshape(3, 4) / 10, True)
        w2 = Tensor(np.linspace(-1, 1, 4).reshape(4, 1), True)
        h = nx.gelu(x @ w1)
        if use_grl:
            h = nx.gradient_reversal(h, 1.0)
        nx.sigmoid(h @ w2).mean().backward()
        grads[use_grl] = (w1.grad.copy(), w2.grad.copy())
    np.testing.assert_allclose(grads[True][0], -grads[False][0], rtol=0, atol=1e-15)
    np.testing.assert_allclose(grads[True][1], grads[False][1], rtol=0, atol=1e-15)


def test_precision_switch():
    with nx.precision("f64"):
        assert Tensor([1.0]).dtype == np.float64
    with nx.precision("f32"):
        assert Tensor([1.0]).dtype == np.float32
    with pytest.raises(ValueError):
        nx.set_precision("f16")


def test_gradients_accumulate_over_shared_use(f64):
    x = Tensor([3.0], requires_grad=True)
    (x * x + x).sum().backward()
    assert x.grad[0] == 7.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=12))
def test_softmax_property(values):
    with nx.precision("f64"):
        y = nx.softmax(Tensor(values)).data
    assert (y >= 0).all()
    assert abs(y.sum() - 1) <= 1e-12
