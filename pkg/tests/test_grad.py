import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clengine.errors import InvalidArgument, ShapeError, StateError
from clengine.grad import (
    SGD,
    ActivationCache,
    Layer,
    Network,
    Parameter,
    backward,
    forward,
    init_network,
    sgd_step,
    softmax,
    softmax_cross_entropy,
    zero_grads,
)

from conftest import central_diff, rel_err


def test_init_is_deterministic():
    a = init_network([2, 3, 2], seed=7)
    b = init_network([2, 3, 2], seed=7)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert pa.id == pb.id
        assert pa.value.tobytes() == pb.value.tobytes()


@pytest.mark.parametrize("seed", [0, 1, 99])
def test_init_respects_xavier_bound(seed):
    net = init_network([4, 4], seed=seed)
    assert np.all(np.abs(net.layers[0].weight.value) <= np.sqrt(6 / 8))
    assert np.all(net.layers[0].bias.value == 0)


@pytest.mark.parametrize("layout", [[2], [], [3, 0]])
def test_init_rejects_bad_layouts(layout):
    with pytest.raises(InvalidArgument):
        init_network(layout, seed=0)


def test_hidden_layers_use_relu_and_last_is_identity():
    net = init_network([3, 4, 5, 2], seed=0)
    assert [l.activation for l in net.layers] == ["relu", "relu", "identity"]


def _identity_net():
    return Network([Layer(Parameter("w", np.eye(2)), Parameter("b", np.zeros((1, 2))), "identity")])


def test_forward_identity_map():
    assert forward(_identity_net(), [[1.0, 2.0]]).tolist() == [[1.0, 2.0]]


def test_forward_relu():
    net = _identity_net()
    net.layers[0].activation = "relu"
    assert forward(net, [[-1.0, 2.0]]).tolist() == [[0.0, 2.0]]


def test_forward_shape_error():
    with pytest.raises(ShapeError):
        forward(init_network([3, 2], 0), np.ones((1, 4)))


def test_uniform_logits_loss_is_ln2():
    loss, _ = softmax_cross_entropy([[0.0, 0.0]], [0])
    assert loss == pytest.approx(np.log(2), abs=1e-12)


def test_saturated_correct_loss_is_tiny():
    loss, _ = softmax_cross_entropy([[10.0, -10.0]], [0])
    assert 0 <= loss < 1e-4


def test_target_out_of_range():
    with pytest.raises(InvalidArgument):
        softmax_cross_entropy([[0.0, 0.0]], [2])


@pytest.mark.parametrize("seed", range(5))
def test_dlogits_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    logits = rng.standard_normal((4, 5))
    y = rng.integers(0, 5, size=4)
    _, analytic = softmax_cross_entropy(logits, y)
    numeric = central_diff(lambda: softmax_cross_entropy(logits, y)[0], logits)
    assert rel_err(analytic, numeric) < 1e-6


def test_mask_removes_probability_and_gradient():
    logits = np.array([[1.0, 5.0, 2.0]])
    mask = np.array([True, False, True])
    loss, d = softmax_cross_entropy(logits, [0], class_mask=mask)
    p = softmax(np.array([1.0, 2.0]))
    assert loss == pytest.approx(-np.log(p[0]))
    assert d[0, 1] == 0.0


def test_single_layer_weight_gradient_is_xT_dlogits():
    net = init_network([3, 2], seed=3)
    x = np.array([[1.0, -2.0, 0.5], [0.0, 1.0, 1.0]])
    cache = ActivationCache()
    out = forward(net, x, cache)
    _, d = softmax_cross_entropy(out, [1, 0])
    backward(net, cache, d)
    np.testing.assert_allclose(net.layers[0].weight.grad, x.T @ d)
    np.testing.assert_allclose(net.layers[0].bias.grad, d.sum(axis=0, keepdims=True))


def _loss(net, x, y):
    return softmax_cross_entropy(forward(net, x), y)[0]


@pytest.mark.parametrize("seed", range(4))
def test_two_layer_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    net = init_network([3, 5, 4], seed=seed)
    x = rng.standard_normal((6, 3))
    y = rng.integers(0, 4, size=6)
    cache = ActivationCache()
    _, d = softmax_cross_entropy(forward(net, x, cache), y)
    backward(net, cache, d)
    for p in net.parameters():
        numeric = central_diff(lambda: _loss(net, x, y), p.value)
        assert rel_err(p.grad, numeric) < 1e-4, p.id


def test_backward_accumulates():
    net = init_network([2, 3, 2], seed=1)
    x = np.array([[0.3, -0.7], [1.0, 0.2]])
    cache = ActivationCache()
    _, d = softmax_cross_entropy(forward(net, x, cache), [0, 1])
    backward(net, cache, d)
    once = [p.grad.copy() for p in net.parameters()]
    backward(net, cache, d)
    for g1, p in zip(once, net.parameters()):
        np.testing.assert_array_equal(p.grad, 2 * g1)


def test_backward_without_cache():
    with pytest.raises(StateError):
        backward(init_network([2, 2], 0), ActivationCache(), np.zeros((1, 2)))


def test_sgd_step_arithmetic():
    p = Parameter("p", [[1.0]])
    p.grad[...] = 2.0
    sgd_step([p], 0.1)
    assert p.value[0, 0] == pytest.approx(0.8)


def test_sgd_zero_grad_is_fixed_point():
    net = init_network([2, 2], 0)
    before = [p.value.copy() for p in net.parameters()]
    sgd_step(net, 0.5)
    for b, p in zip(before, net.parameters()):
        np.testing.assert_array_equal(b, p.value)


@pytest.mark.parametrize("lr", [0.0, -1.0])
def test_sgd_rejects_nonpositive_lr(lr):
    with pytest.raises(InvalidArgument):
        sgd_step(init_network([2, 2], 0), lr)
    with pytest.raises(InvalidArgument):
        SGD([], lr)


def test_zero_grads_idempotent():
    net = init_network([2, 3], 0)
    for p in net.parameters():
        assert not p.grad.any()
    for p in net.parameters():
        p.grad += 1.0
    zero_grads(net)
    zero_grads(net)
    for p in net.parameters():
        assert not p.grad.any()


@settings(max_examples=40, deadline=None)
@given(
    logits=st.lists(st.floats(-20, 20), min_size=2, max_size=6),
    data=st.data(),
)
def test_loss_is_nonnegative(logits, data):
    t = data.draw(st.integers(0, len(logits) - 1))
    loss, _ = softmax_cross_entropy([logits], [t])
    assert loss >= 0


def test_training_trajectory_is_bit_identical():
    def trajectory():
        net = init_network([3, 4, 2], seed=5)
        rng = np.random.default_rng(0)
        x = rng.standard_normal((8, 3))
        y = rng.integers(0, 2, 8)
        for _ in range(5):
            zero_grads(net)
            cache = ActivationCache()
            _, d = softmax_cross_entropy(forward(net, x, cache), y)
            backward(net, cache, d)
            sgd_step(net, 0.1)
        return b"".join(p.value.tobytes() for p in net.parameters())

    assert trajectory() == trajectory()
