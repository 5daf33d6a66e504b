import numpy as np
import pytest

from noro import autodiff as ad
from noro.autodiff import Parameter, Tape, Tensor, backward
from noro.gradcheck import fd_gradient, max_rel_error


def quad(t):
    """Reduce any tensor to a scalar with a nontrivial gradient."""
    return ad.tsum(ad.mul(t, t))


def test_backward_sum_of_squares():
    x = Parameter("x", np.array([1.0, 2.0, 3.0]))
    with Tape() as tape:
        loss = ad.tsum(ad.mul(x, x))
    grads = backward(loss, tape)
    np.testing.assert_allclose(grads["x"], [2.0, 4.0, 6.0])


def test_backward_constant_loss_zero_grads():
    x = Parameter("x", np.array([1.0, 2.0]))
    with Tape() as tape:
        _ = ad.mul(x, 3.0)  # parameter appears on tape...
        loss = Tensor(5.0)  # ...but the loss does not depend on it
    with pytest.warns(UserWarning, match="not connected"):
        grads = backward(loss, tape)
    np.testing.assert_array_equal(grads["x"], [0.0, 0.0])


def test_backward_rejects_non_scalar_loss():
    x = Parameter("x", np.ones(3))
    with Tape() as tape:
        y = ad.mul(x, 2.0)
    with pytest.raises(ValueError, match="scalar"):
        backward(y, tape)


def test_two_layer_net_matches_finite_differences():
    for seed in range(5):
        g = np.random.default_rng(seed)
        w1 = Parameter("w1", g.standard_normal((4, 6)))
        b1 = Parameter("b1", g.standard_normal(6))
        w2 = Parameter("w2", g.standard_normal((6, 2)))
        x = g.standard_normal((3, 4))
        y = g.standard_normal((3, 2))

        def forward():
            h = ad.tanh(ad.affine(Tensor(x), w1, b1))
            out = ad.matmul(h, w2)
            diff = ad.sub(out, Tensor(y))
            return ad.tmean(ad.mul(diff, diff))

        with Tape() as tape:
            loss = forward()
        grads = backward(loss, tape)
        for p in (w1, b1, w2):
            def f(v, p=p):
                old = p.data
                p.data = v
                out = forward().item()
                p.data = old
                return out
            fd = fd_gradient(f, p.data)
            assert max_rel_error(grads[p.name], fd) < 1e-4


OPS = {
    "add": (lambda a, b: quad(ad.add(a, b)), [(3, 4), (3, 4)]),
    "add_broadcast": (lambda a, b: quad(ad.add(a, b)), [(3, 4), (4,)]),
    "sub": (lambda a, b: quad(ad.sub(a, b)), [(3, 4), (1, 4)]),
    "mul": (lambda a, b: quad(ad.mul(a, b)), [(3, 4), (3, 4)]),
    "div": (lambda a, b: quad(ad.div(a, ad.add(ad.mul(b, b), 1.0))), [(3, 4), (3, 4)]),
    "neg": (lambda a: quad(ad.neg(a)), [(5,)]),
    "matmul": (lambda a, b: quad(ad.matmul(a, b)), [(3, 4), (4, 2)]),
    "exp": (lambda a: quad(ad.exp(a)), [(3, 3)]),
    "log": (lambda a: quad(ad.log(ad.add(ad.mul(a, a), 0.5))), [(3, 3)]),
    "sqrt": (lambda a: quad(ad.sqrt(ad.add(ad.mul(a, a), 0.5))), [(3, 3)]),
    "pow": (lambda a: quad(ad.pow_const(ad.add(ad.mul(a, a), 1.0), 1.5)), [(3, 3)]),
    "tanh": (lambda a: quad(ad.tanh(a)), [(3, 3)]),
    "sigmoid": (lambda a: quad(ad.sigmoid(a)), [(3, 3)]),
    "relu": (lambda a: quad(ad.relu(ad.add(a, 0.1))), [(3, 3)]),
    "gelu": (lambda a: quad(ad.gelu(a)), [(3, 3)]),
    "abs": (lambda a: quad(ad.absolute(ad.add(a, 0.1))), [(3, 3)]),
    "sum_all": (lambda a: quad(ad.tsum(a)), [(3, 4)]),
    "sum_axis": (lambda a: quad(ad.tsum(a, axis=1, keepdims=True)), [(3, 4)]),
    "mean_axis": (lambda a: quad(ad.tmean(a, axis=0)), [(3, 4)]),
    "reshape": (lambda a: quad(ad.reshape(a, (2, 6))), [(3, 4)]),
    "transpose": (lambda a: quad(ad.transpose2d(a)), [(3, 4)]),
    "concat": (lambda a, b: quad(ad.concat([a, b], axis=1)), [(3, 2), (3, 3)]),
    "narrow": (lambda a: quad(ad.narrow(a, 1, 1, 2)), [(3, 4)]),
    "pad_rows": (lambda a: quad(ad.pad_rows(a, 2, 1)), [(3, 4)]),
    "scale": (lambda a: quad(ad.scale(a, -1.7)), [(3, 4)]),
    "affine": (lambda x, w, b: quad(ad.affine(x, w, b)), [(5, 4), (4, 3), (3,)]),
    "affine_nobias": (lambda x, w: quad(ad.affine(x, w)), [(5, 4), (4, 3)]),
    "softmax": (lambda a: quad(ad.softmax_op(a)), [(4, 5)]),
    "layer_norm": (lambda x, g, b: quad(ad.layer_norm_op(x, g, b)), [(4, 6), (6,), (6,)]),
    "bmm": (lambda a, b: quad(ad.bmm(a, b)), [(3, 4, 5), (3, 5, 2)]),
    "permute": (lambda a: quad(ad.permute(a, (2, 0, 1))), [(3, 4, 5)]),
    "conv1d": (lambda x, w, b: quad(ad.conv1d_op(x, w, b, 3, 1)), [(7, 4), (12, 5), (5,)]),
    "conv1d_dilated": (lambda x, w, b: quad(ad.conv1d_op(x, w, b, 3, 2)), [(9, 4), (12, 5), (5,)]),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradient_matches_finite_differences(name):
    build, shapes = OPS[name]
    for seed in range(3):
        g = np.random.default_rng(seed + 17)
        xs = [Parameter(f"x{i}", g.standard_normal(s)) for i, s in enumerate(shapes)]
        with Tape() as tape:
            loss = build(*xs)
        grads = backward(loss, tape)
        for i, x in enumerate(xs):
            def f(v, i=i):
                old = xs[i].data
                xs[i].data = v
                out = build(*xs).item()
                xs[i].data = old
                return out
            fd = fd_gradient(f, x.data)
            assert max_rel_error(grads[f"x{i}"], fd) < 1e-4, f"{name} input {i}"


def test_non_finite_result_raises():
    x = Tensor(np.array([1.0, 0.0]), requires_grad=True)
    with pytest.raises(FloatingPointError):
        ad.div(1.0, x)
    with pytest.raises(FloatingPointError):
        ad.log(Tensor(np.array([0.0])))


def test_forward_is_deterministic():
    g = np.random.default_rng(0)
    x = Tensor(g.standard_normal((4, 4)))
    w = Tensor(g.standard_normal((4, 4)))
    a = ad.softmax_op(ad.matmul(x, w)).data
    b = ad.softmax_op(ad.matmul(x, w)).data
    np.testing.assert_array_equal(a, b)


def test_grad_accumulates_over_shared_input():
    x = Parameter("x", np.array([2.0]))
    with Tape() as tape:
        y = ad.add(ad.mul(x, 3.0), ad.mul(x, x))  # 3x + x^2
        loss = ad.tsum(y)
    grads = backward(loss, tape)
    np.testing.assert_allclose(grads["x"], [3.0 + 2.0 * 2.0])


def test_leaf_tensor_receives_grad():
    h = Tensor(np.array([[1.0, 2.0]]), requires_grad=True)
    with Tape() as tape:
        loss = ad.tsum(ad.mul(h, h))
    backward(loss, tape)
    np.testing.assert_allclose(h.grad, [[2.0, 4.0]])


def test_no_recording_without_tape():
    x = Parameter("x", np.ones(3))
    tape = Tape()
    y = ad.mul(x, 2.0)  # outside the context: nothing recorded
    assert len(tape) == 0 and y.requires_grad
