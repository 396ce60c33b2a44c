import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tucore_gcn.numerics import (
    MASK_NEG,
    GradTape,
    NumericalError,
    Tensor,
    grad_check,
    relative_error,
)
from tucore_gcn.numerics import tensor as T
from tucore_gcn.numerics.params import ModelParams


def numeric_grad(f, x, eps=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + eps
        hi = f(x)
        x[idx] = old - eps
        lo = f(x)
        x[idx] = old
        g[idx] = (hi - lo) / (2 * eps)
    return g


def tape_grad(op, *arrays):
    ts = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    with GradTape() as tape:
        out = T.tsum(op(*ts))
    tape.backward(out)
    return [t.grad for t in ts]


UNARY = {
    "exp": T.exp,
    "log": lambda a: T.log(a * a + 1.0),
    "sqrt": lambda a: T.sqrt(a * a + 1.0),
    "tanh": T.tanh,
    "sigmoid": T.sigmoid,
    "gelu": T.gelu,
    "neg": T.neg,
    "power": lambda a: T.power(a * a + 1.0, 1.5),
    "normalize": lambda a: T.normalize(a) * Tensor(np.linspace(-1, 2, 5)),
    "softmax": lambda a: T.masked_softmax(a, np.ones((4, 5), bool)) * Tensor(np.arange(5.0)),
    "reshape": lambda a: T.reshape(a, (5, 4)) * Tensor(np.arange(20.0).reshape(5, 4)),
    "transpose": lambda a: T.transpose(a) * Tensor(np.arange(20.0).reshape(5, 4)),
    "index": lambda a: a[np.array([0, 0, 3]), 1:4] * 2.0,
    "mean": lambda a: T.mean(a, axis=0) * Tensor(np.arange(5.0)),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_gradients_match_central_differences(name, rng):
    op = UNARY[name]
    x = rng.normal(size=(4, 5))
    [g] = tape_grad(op, x)
    num = numeric_grad(lambda v: float(T.tsum(op(Tensor(v))).data), x.copy())
    np.testing.assert_allclose(g, num, rtol=1e-6, atol=1e-8)


BINARY = {
    "add_broadcast": (lambda a, b: a + b, (3, 4), (4,)),
    "sub": (lambda a, b: a - b, (3, 4), (3, 1)),
    "mul": (lambda a, b: a * b, (3, 4), (3, 4)),
    "div": (lambda a, b: a / (b * b + 1.0), (3, 4), (1, 4)),
    "matmul": (lambda a, b: a @ b, (3, 4), (4, 2)),
    "batched_matmul": (lambda a, b: a @ b, (2, 3, 4), (4, 5)),
    "concat": (lambda a, b: T.concat([a, b], axis=0) * Tensor(np.arange(28.0).reshape(7, 4)), (3, 4), (4, 4)),
    "stack": (lambda a, b: T.stack([a, b], axis=1) * Tensor(np.arange(24.0).reshape(3, 2, 4)), (3, 4), (3, 4)),
}


@pytest.mark.parametrize("name", sorted(BINARY))
def test_binary_gradients_match_central_differences(name, rng):
    op, sa, sb = BINARY[name]
    a, b = rng.normal(size=sa), rng.normal(size=sb)
    ga, gb = tape_grad(op, a, b)
    na = numeric_grad(lambda v: float(T.tsum(op(Tensor(v), Tensor(b))).data), a.copy())
    nb = numeric_grad(lambda v: float(T.tsum(op(Tensor(a), Tensor(v))).data), b.copy())
    np.testing.assert_allclose(ga, na, rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(gb, nb, rtol=1e-6, atol=1e-8)


def test_relu_gradient_away_from_kink():
    x = np.array([-2.0, -0.5, 0.5, 3.0])
    [g] = tape_grad(T.relu, x)
    np.testing.assert_array_equal(g, [0, 0, 1, 1])


def test_quadratic_form_gradient_is_exact():
    a = np.array([[2.0, 1.0], [0.5, 3.0]])
    x = Tensor(np.array([[1.0], [-2.0]]), requires_grad=True)
    with GradTape() as tape:
        loss = T.tsum(T.transpose(x) @ (Tensor(a) @ x)) * 0.5
    tape.backward(loss)
    np.testing.assert_allclose(x.grad, 0.5 * (a + a.T) @ x.data, rtol=0, atol=1e-15)


def test_shared_subexpression_accumulates():
    x = Tensor(np.array([3.0]), requires_grad=True)
    with GradTape() as tape:
        y = x * x
        z = y + y * x
        s = T.tsum(z)
    tape.backward(s)
    np.testing.assert_allclose(x.grad, 2 * 3.0 + 3 * 9.0)


def test_loss_from_outside_the_tape_is_rejected():
    x = Tensor(np.ones(2), requires_grad=True)
    with GradTape() as tape:
        y = x * 2.0
    with pytest.raises(ValueError):
        tape.backward(T.tsum(y))


def test_tape_cannot_be_replayed():
    x = Tensor(np.ones(2), requires_grad=True)
    with GradTape() as tape:
        y = T.tsum(x * 2.0)
    tape.backward(y)
    with pytest.raises(RuntimeError):
        tape.backward(y)


def test_non_finite_result_raises():
    with pytest.raises(NumericalError):
        T.log(Tensor(np.array([-1.0])))


def scalar_softmax(scores, allowed):
    out = np.zeros_like(scores)
    for i in range(scores.shape[0]):
        idx = [j for j in range(scores.shape[1]) if allowed[i, j]]
        m = max(scores[i, j] for j in idx)
        z = sum(np.exp(scores[i, j] - m) for j in idx)
        for j in idx:
            out[i, j] = np.exp(scores[i, j] - m) / z
    return out


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 7), st.integers(1, 7), st.integers(0, 10_000))
def test_masked_softmax_matches_scalar_loop(n, m, seed):
    r = np.random.default_rng(seed)
    scores = r.normal(scale=4, size=(n, m))
    allowed = r.random((n, m)) < 0.6
    allowed[np.arange(n), r.integers(0, m, n)] = True
    out = T.masked_softmax(Tensor(scores), allowed).data
    np.testing.assert_allclose(out, scalar_softmax(scores, allowed), rtol=1e-12, atol=1e-15)
    assert np.all(out[~allowed] == 0.0)
    np.testing.assert_allclose(out.sum(-1), 1.0, atol=1e-12)


def test_masked_softmax_rejects_empty_row_and_bad_shape():
    with pytest.raises(ValueError):
        T.masked_softmax(Tensor(np.zeros((2, 3))), np.array([[True, False, False], [False, False, False]]))
    with pytest.raises(ValueError):
        T.masked_softmax(Tensor(np.zeros((2, 3))), np.ones((3, 3), bool))


def test_masked_softmax_survives_large_scores():
    s = np.array([[1e4, -1e4, 3.0]])
    out = T.masked_softmax(Tensor(s), np.array([[True, True, False]])).data
    np.testing.assert_allclose(out, [[1.0, 0.0, 0.0]])
    assert MASK_NEG < -1e8


def test_bce_with_logits_matches_closed_form(rng):
    z = rng.normal(scale=5, size=(3, 4))
    y = (rng.random((3, 4)) < 0.5).astype(float)
    p = 1 / (1 + np.exp(-z))
    ref = -(y * np.log(p) + (1 - y) * np.log(1 - p)).sum()
    np.testing.assert_allclose(float(T.bce_with_logits(Tensor(z), y).data), ref, rtol=1e-10)
    [g] = tape_grad(lambda t: T.bce_with_logits(t, y), z)
    np.testing.assert_allclose(g, p - y, atol=1e-12)


def test_dropout_is_identity_at_eval_and_inverted_in_training(rng):
    x = Tensor(np.ones((200, 50)))
    assert T.dropout(x, 0.5, None, train=False) is x
    out = T.dropout(x, 0.5, np.random.default_rng(0), train=True).data
    assert set(np.unique(out)) <= {0.0, 2.0}
    assert abs(out.mean() - 1.0) < 0.05
    a = T.dropout(x, 0.3, np.random.default_rng(5), True).data
    b = T.dropout(x, 0.3, np.random.default_rng(5), True).data
    np.testing.assert_array_equal(a, b)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 1000))
def test_matmul_is_linear(alpha, beta, seed):
    r = np.random.default_rng(seed)
    a, x, y = r.normal(size=(3, 4)), r.normal(size=(4, 2)), r.normal(size=(4, 2))
    lhs = (Tensor(a) @ Tensor(alpha * x + beta * y)).data
    rhs = alpha * (Tensor(a) @ Tensor(x)).data + beta * (Tensor(a) @ Tensor(y)).data
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_grad_check_agrees_on_small_network(rng):
    params = ModelParams()
    params.add("w1", rng.normal(size=(3, 4)))
    params.add("b1", rng.normal(size=4))
    params.add("w2", rng.normal(size=(4, 1)))
    x = rng.normal(size=(5, 3))

    def loss():
        h = T.tanh(Tensor(x) @ params["w1"] + params["b1"])
        return T.tsum((h @ params["w2"]) ** 2)

    rep = grad_check(loss, params, samples=30)
    assert rep.max_rel_error < 1e-7
    assert set(rep.by_family()) == {"w1", "b1", "w2"}


def test_relative_error_floor():
    assert relative_error(0.0, 0.0) == 0.0
    assert relative_error(1e-20, 0.0) == 1.0
    assert relative_error(1e-20, 0.0, floor=1e-6) < 1e-13
