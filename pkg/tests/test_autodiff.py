# tests/test_autodiff.py
import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from core.autodiff import (
    ComputationTape,
    Tensor,
    add,
    backward,
    concat_channels,
    conv2d,
    conv2d_transposed,
    count_macs,
    depth_to_space,
    mean_abs_error,
    mean_of,
    mul,
    prelu,
    record,
    relu,
    scale,
    space_to_depth,
    sub,
)
from core.autodiff.gradcheck import grad_check, relative_error
from core.errors import GeometryError, NonDeterminismError, NonFiniteError, ShapeError
from tests.conftest import naive_conv2d, naive_conv2d_transposed


def _param(rng, *shape, name=None, low=-1.0, high=1.0):
    return Tensor(rng.uniform(low, high, shape), requires_grad=True, name=name)


def _weighted_loss(out: Tensor, weights: np.ndarray) -> Tensor:
    """Random linear functional of ``out`` (MAE against a far-away target is linear)."""
    pred = mul(out, Tensor(weights))
    return mean_abs_error(pred, Tensor(np.full(out.shape, -100.0)))


# -----------------------------------------------------------
# Forward oracles
# -----------------------------------------------------------
@pytest.mark.parametrize("stride,padding,k", [(1, 0, 3), (1, 1, 3), (2, 1, 3), (4, 2, 8), (2, 2, 6)])
def test_conv2d_matches_loop_reference(rng, stride, padding, k):
    x = rng.normal(size=(2, 3, 12, 12))
    w = rng.normal(size=(4, 3, k, k))
    b = rng.normal(size=4)
    out = conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride, padding=padding)
    assert_allclose(out.data, naive_conv2d(x, w, b, stride, padding), rtol=1e-10, atol=1e-10)


def test_conv2d_box_kernel_counts_neighbours():
    x = Tensor(np.ones((1, 1, 3, 3)))
    w = Tensor(np.ones((1, 1, 3, 3)))
    out = conv2d(x, w, padding=1).data[0, 0]
    assert_array_equal(out, [[4, 6, 4], [6, 9, 6], [4, 6, 4]])


@pytest.mark.parametrize("stride,padding,k", [(1, 0, 3), (2, 1, 4), (4, 2, 8), (2, 2, 6)])
def test_conv2d_transposed_matches_loop_reference(rng, stride, padding, k):
    x = rng.normal(size=(1, 2, 5, 4))
    w = rng.normal(size=(2, 3, k, k))
    b = rng.normal(size=3)
    out = conv2d_transposed(Tensor(x), Tensor(w), Tensor(b), stride=stride, padding=padding)
    assert out.shape == (1, 3, (5 - 1) * stride - 2 * padding + k, (4 - 1) * stride - 2 * padding + k)
    assert_allclose(out.data, naive_conv2d_transposed(x, w, b, stride, padding), rtol=1e-10, atol=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_transposed_conv_is_adjoint_of_conv(seed):
    rng = np.random.default_rng(seed)
    stride, padding, k = [(1, 1, 3), (2, 2, 6), (4, 2, 8), (2, 0, 2), (3, 1, 5)][seed]
    h = w = 4 * stride
    x = rng.normal(size=(2, 3, h, w))
    weight = rng.normal(size=(5, 3, k, k))
    y_shape = conv2d(Tensor(x), Tensor(weight), stride=stride, padding=padding).shape
    y = rng.normal(size=y_shape)
    # conv weight [Cout, Cin, k, k] read as a transposed weight [Cin', Cout', k, k]
    lhs = np.sum(conv2d(Tensor(x), Tensor(weight), stride=stride, padding=padding).data * y)
    xt = conv2d_transposed(Tensor(y), Tensor(weight), stride=stride, padding=padding)
    assert xt.shape == x.shape
    rhs = np.sum(x * xt.data)
    assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1.0)


def test_adjoint_identity_exact_geometry(rng):
    x = rng.normal(size=(1, 2, 16, 16))
    weight = rng.normal(size=(3, 2, 8, 8))
    y = rng.normal(size=(1, 3, 4, 4))
    lhs = np.sum(conv2d(Tensor(x), Tensor(weight), stride=4, padding=2).data * y)
    back = conv2d_transposed(Tensor(y), Tensor(weight), stride=4, padding=2)
    assert back.shape == x.shape
    rhs = np.sum(x * back.data)
    assert abs(lhs - rhs) <= 1e-10 * abs(lhs)


def test_conv2d_is_linear(rng):
    x, z = rng.normal(size=(2, 1, 2, 6, 6))
    w = Tensor(rng.normal(size=(3, 2, 3, 3)))
    a, b = 0.7, -1.3
    combined = conv2d(Tensor(a * x + b * z), w, padding=1).data
    separate = a * conv2d(Tensor(x), w, padding=1).data + b * conv2d(Tensor(z), w, padding=1).data
    assert_allclose(combined, separate, rtol=1e-5, atol=1e-10)


def test_conv_geometry_and_shape_errors():
    with pytest.raises(GeometryError):
        conv2d(Tensor(np.ones((1, 1, 2, 2))), Tensor(np.ones((1, 1, 5, 5))))
    with pytest.raises(ShapeError):
        conv2d(Tensor(np.ones((1, 2, 4, 4))), Tensor(np.ones((1, 3, 3, 3))))
    with pytest.raises(GeometryError):
        conv2d_transposed(Tensor(np.ones((1, 1, 1, 1))), Tensor(np.ones((1, 1, 1, 1))), padding=1)


def test_space_to_depth_channel_order_and_inverse(rng):
    x = Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
    folded = space_to_depth(x, 2)
    assert folded.shape == (1, 4, 1, 1)
    assert_array_equal(folded.data.reshape(-1), [1, 2, 3, 4])

    y = rng.normal(size=(2, 3, 8, 12))
    for block in (2, 4):
        assert_array_equal(depth_to_space(space_to_depth(Tensor(y), block), block).data, y)
    with pytest.raises(GeometryError):
        space_to_depth(Tensor(np.ones((1, 1, 6, 6))), 4)


def test_no_broadcasting():
    with pytest.raises(ShapeError):
        add(Tensor(np.ones((1, 1, 2, 2))), Tensor(np.ones((1, 1, 1, 1))))
    with pytest.raises(ShapeError):
        concat_channels([Tensor(np.ones((1, 1, 2, 2))), Tensor(np.ones((1, 1, 3, 3)))])


# -----------------------------------------------------------
# Backward
# -----------------------------------------------------------
def test_mae_hand_chain_rule():
    w = Tensor(np.array([1.0]), requires_grad=True)
    with ComputationTape() as tape:
        loss = mean_abs_error(mul(w, Tensor(np.array([2.0]))), Tensor(np.array([0.0])))
    backward(tape, loss)
    assert loss.item() == 2.0
    assert_array_equal(w.grad, [2.0])


def test_backward_rejects_non_scalar():
    x = Tensor(np.ones((2,)), requires_grad=True)
    with ComputationTape() as tape:
        y = scale(x, 2.0)
    with pytest.raises(ShapeError):
        backward(tape, y)


def test_shared_tensor_accumulates_gradient():
    x = Tensor(np.array([3.0]), requires_grad=True)
    with ComputationTape() as tape:
        loss = mean_abs_error(add(x, x), Tensor(np.array([0.0])))
    backward(tape, loss)
    assert_array_equal(x.grad, [2.0])


def test_unused_parameter_gets_no_gradient():
    x = Tensor(np.array([1.0]), requires_grad=True)
    unused = Tensor(np.array([5.0]), requires_grad=True)
    with ComputationTape() as tape:
        loss = mean_abs_error(x, Tensor(np.array([0.0])))
    grads = backward(tape, loss)
    assert id(unused) not in grads
    report = grad_check(lambda: mean_abs_error(x, Tensor(np.array([0.0]))), [unused])
    assert report.errors["param0"] == 0.0


def test_prelu_subgradient_at_zero():
    x = Tensor(np.array([0.0, -2.0, 3.0]), requires_grad=True)
    a = Tensor(np.array([0.25]), requires_grad=True)
    with ComputationTape() as tape:
        loss = mean_abs_error(prelu(x, a), Tensor(np.full(3, -10.0)))
    backward(tape, loss)
    assert_allclose(x.grad, np.array([1.0, 0.25, 1.0]) / 3)
    assert_allclose(a.grad, [-2.0 / 3])


def test_relu_gradient_masks_negative():
    x = Tensor(np.array([-1.0, 0.0, 2.0]), requires_grad=True)
    with ComputationTape() as tape:
        loss = mean_abs_error(relu(x), Tensor(np.full(3, -1.0)))
    backward(tape, loss)
    assert_allclose(x.grad, np.array([0.0, 0.0, 1.0]) / 3)


def test_activation_rejects_non_finite():
    with pytest.raises(NonFiniteError):
        prelu(Tensor(np.array([np.nan])), 0.25)


def test_no_tape_records_nothing():
    x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
    y = add(x, x)
    assert not y.requires_grad


# -----------------------------------------------------------
# Finite-difference checks per operator
# -----------------------------------------------------------
def _case_conv2d(rng):
    x = _param(rng, 1, 2, 4, 4, name="x")
    w = _param(rng, 3, 2, 3, 3, name="w")
    b = _param(rng, 3, name="b")
    return [x, w, b], lambda: conv2d(x, w, b, stride=1, padding=1)


def _case_conv2d_strided(rng):
    x = _param(rng, 1, 2, 8, 8, name="x")
    w = _param(rng, 2, 2, 6, 6, name="w")
    return [x, w], lambda: conv2d(x, w, stride=2, padding=2)


def _case_conv2d_transposed(rng):
    x = _param(rng, 1, 2, 3, 3, name="x")
    w = _param(rng, 2, 2, 6, 6, name="w")
    b = _param(rng, 2, name="b")
    return [x, w, b], lambda: conv2d_transposed(x, w, b, stride=2, padding=2)


def _case_space_to_depth(rng):
    x = _param(rng, 1, 2, 4, 4, name="x")
    return [x], lambda: space_to_depth(x, 2)


def _case_depth_to_space(rng):
    x = _param(rng, 1, 8, 2, 2, name="x")
    return [x], lambda: depth_to_space(x, 2)


def _case_concat(rng):
    a = _param(rng, 1, 2, 3, 3, name="a")
    b = _param(rng, 1, 1, 3, 3, name="b")
    return [a, b], lambda: concat_channels([a, b, a])


def _case_elementwise(rng):
    a = _param(rng, 1, 2, 3, 3, name="a")
    b = _param(rng, 1, 2, 3, 3, name="b")
    return [a, b], lambda: sub(mul(add(a, b), b), a)


def _case_prelu(rng):
    x = Tensor(rng.uniform(0.1, 1.0, (1, 2, 3, 3)) * rng.choice([-1.0, 1.0], (1, 2, 3, 3)),
               requires_grad=True, name="x")
    a = Tensor(np.array([0.3]), requires_grad=True, name="slope")
    return [x, a], lambda: prelu(x, a)


def _case_mean_of(rng):
    a = _param(rng, 1, 1, 2, 2, name="a")
    b = _param(rng, 1, 1, 2, 2, name="b")
    return [a, b], lambda: mean_of([a, scale(b, 3.0), a])


CASES = {
    "conv2d": _case_conv2d,
    "conv2d_strided": _case_conv2d_strided,
    "conv2d_transposed": _case_conv2d_transposed,
    "space_to_depth": _case_space_to_depth,
    "depth_to_space": _case_depth_to_space,
    "concat_channels": _case_concat,
    "elementwise": _case_elementwise,
    "prelu": _case_prelu,
    "mean_of": _case_mean_of,
}


@pytest.mark.parametrize("case", sorted(CASES))
@pytest.mark.parametrize("seed", range(20))
def test_operator_gradients_match_finite_differences(case, seed):
    rng = np.random.default_rng(seed)
    params, build = CASES[case](rng)
    out_shape = build().shape
    weights = rng.normal(size=out_shape)
    report = grad_check(lambda: _weighted_loss(build(), weights), params, step=1e-5, tolerance=1e-4)
    assert report.passed, report.errors


def test_mean_abs_error_gradient(rng):
    pred = _param(rng, 1, 1, 4, 4, name="pred")
    target = Tensor(pred.data + rng.choice([-0.5, 0.5], (1, 1, 4, 4)))
    report = grad_check(lambda: mean_abs_error(pred, target), [pred])
    assert report.passed


def test_grad_check_exact_for_linear_map(rng):
    w = _param(rng, 3, name="w")
    x = Tensor(rng.normal(size=3))
    report = grad_check(lambda: mean_abs_error(mul(w, x), Tensor(np.full(3, -100.0))), [w])
    assert report.max_error < 1e-7


def test_grad_check_flags_corrupted_backward(rng):
    def doubled_identity(t: Tensor) -> Tensor:
        return record("bad_identity", (t,), t.data.copy(), lambda g: (2.0 * g,))

    x = _param(rng, 4, name="x")
    target = Tensor(np.full(4, -10.0))
    report = grad_check(lambda: mean_abs_error(doubled_identity(x), target), [x])
    assert report.flagged == ["x"]


def test_grad_check_detects_non_determinism():
    x = Tensor(np.array([1.0]), requires_grad=True)
    calls = []

    def drifting():
        calls.append(1)
        return mean_abs_error(scale(x, float(len(calls))), Tensor(np.array([0.0])))

    with pytest.raises(NonDeterminismError):
        grad_check(drifting, [x])


def test_relative_error_floor():
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0


# -----------------------------------------------------------
# Runtime MAC counter & determinism
# -----------------------------------------------------------
def test_runtime_mac_counter_pointwise_conv():
    x = Tensor(np.ones((1, 4, 8, 8)))
    w = Tensor(np.ones((4, 4, 1, 1)))
    with count_macs() as counter:
        conv2d(x, w)
    assert counter.macs == 4 * 8 * 8 * 4
    assert counter.by_op["conv2d"] == 1024


def test_forward_and_backward_are_deterministic(rng):
    x = rng.normal(size=(1, 2, 6, 6))
    w = rng.normal(size=(3, 2, 3, 3))

    def run():
        wt = Tensor(w.copy(), requires_grad=True)
        with ComputationTape() as tape:
            out = conv2d(Tensor(x), wt, padding=1)
            loss = mean_abs_error(out, Tensor(np.zeros(out.shape)))
        backward(tape, loss)
        return out.data, wt.grad

    (o1, g1), (o2, g2) = run(), run()
    assert_array_equal(o1, o2)
    assert_array_equal(g1, g2)
