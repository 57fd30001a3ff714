import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from roadfair.errors import ConfigurationError, NumericError, UsageError
from roadfair.nn import (
    Activation,
    DenseNetwork,
    GradientSet,
    LayerSpec,
    backward,
    binary_cross_entropy,
    forward,
    init_network,
    make_rng,
    sgd_step,
)

from .helpers import central_difference, relative_error


def random_net(rng, dims, out_act=Activation.SIGMOID):
    acts = [Activation.RELU] * (len(dims) - 2) + [out_act]
    specs = [LayerSpec(a, b, act) for a, b, act in zip(dims[:-1], dims[1:], acts)]
    net = init_network(specs, rng)
    for b in net.biases:
        b[:] = rng.normal(0, 0.5, b.shape)
    return net


def test_init_bound_and_zero_bias():
    net = init_network([LayerSpec(2, 1, "sigmoid")], make_rng(42))
    assert np.all(np.abs(net.weights[0]) <= np.sqrt(2.0))
    assert net.biases[0].tolist() == [0.0]


def test_init_is_deterministic():
    specs = [LayerSpec(3, 4, "relu"), LayerSpec(4, 1, "sigmoid")]
    a = init_network(specs, make_rng(7))
    b = init_network(specs, make_rng(7))
    assert a.checksum() == b.checksum()


def test_init_rejects_unchained_dims():
    with pytest.raises(ConfigurationError):
        init_network([LayerSpec(3, 4), LayerSpec(5, 1)], make_rng(0))


def test_layer_spec_rejects_zero_dim():
    with pytest.raises(ConfigurationError):
        LayerSpec(0, 1)


def test_zero_network_sigmoid_is_half():
    net = init_network([LayerSpec(3, 5, "relu"), LayerSpec(5, 1, "sigmoid")], make_rng(0))
    for w in net.weights:
        w[:] = 0
    out, _ = forward(net, make_rng(1).normal(size=(6, 3)))
    np.testing.assert_array_equal(out, 0.5)


def test_identity_layer_passes_through():
    net = DenseNetwork([LayerSpec(3, 3)], [np.eye(3)], [np.zeros(3)])
    x = make_rng(2).normal(size=(4, 3))
    np.testing.assert_array_equal(forward(net, x)[0], x)


def test_forward_matches_hand_rolled():
    rng = make_rng(3)
    net = random_net(rng, [4, 6, 2], out_act=Activation.IDENTITY)
    x = rng.normal(size=(5, 4))
    expected = np.empty((5, 2))
    for i in range(5):
        hidden = [max(0.0, sum(x[i, a] * net.weights[0][a, j] for a in range(4)) + net.biases[0][j]) for j in range(6)]
        for k in range(2):
            expected[i, k] = sum(hidden[j] * net.weights[1][j, k] for j in range(6)) + net.biases[1][k]
    np.testing.assert_allclose(forward(net, x)[0], expected, rtol=1e-12, atol=1e-12)


def test_forward_rejects_bad_inputs():
    net = init_network([LayerSpec(2, 1)], make_rng(0))
    with pytest.raises(UsageError):
        forward(net, np.zeros((3, 3)))
    with pytest.raises(NumericError):
        forward(net, np.array([[np.nan, 0.0]]))


def test_backward_zero_output_grads():
    rng = make_rng(4)
    net = random_net(rng, [3, 4, 1])
    _, trace = forward(net, rng.normal(size=(5, 3)))
    grads = backward(net, trace, np.zeros((5, 1)))
    assert all(not g.any() for g in grads.parameters())


def test_backward_identity_sum_loss():
    rng = make_rng(5)
    net = DenseNetwork([LayerSpec(3, 2)], [rng.normal(size=(3, 2))], [np.zeros(2)])
    x = rng.normal(size=(7, 3))
    _, trace = forward(net, x)
    grads = backward(net, trace, np.ones((7, 2)))
    np.testing.assert_allclose(grads.weights[0], np.outer(x.sum(axis=0), np.ones(2)))
    np.testing.assert_allclose(grads.biases[0], [7.0, 7.0])


def test_backward_shape_mismatch():
    rng = make_rng(6)
    net = random_net(rng, [3, 1])
    _, trace = forward(net, rng.normal(size=(5, 3)))
    with pytest.raises(UsageError):
        backward(net, trace, np.ones((4, 1)))


@pytest.mark.parametrize("seed", range(10))
def test_backward_matches_finite_differences(seed):
    rng = make_rng(100 + seed)
    net = random_net(rng, [5, 7, 4, 1])
    x = rng.normal(size=(9, 5))
    y = rng.integers(0, 2, 9)

    def loss():
        return binary_cross_entropy(forward(net, x)[0], y)[0]

    out, trace = forward(net, x)
    _, _, d = binary_cross_entropy(out, y)
    grads = backward(net, trace, d[:, None])
    for p, g in zip(net.parameters(), grads.parameters()):
        assert relative_error(g, central_difference(loss, p)) < 1e-4


def test_input_gradient_matches_finite_differences():
    rng = make_rng(11)
    net = random_net(rng, [2, 6, 1])
    x = rng.normal(size=(4, 2))
    out, trace = forward(net, x)
    grads = backward(net, trace, np.ones_like(out))
    numeric = central_difference(lambda: forward(net, x)[0].sum(), x)
    assert relative_error(grads.inputs, numeric) < 1e-4


def test_sgd_zero_lr_is_noop():
    rng = make_rng(8)
    net = random_net(rng, [3, 2, 1])
    before = net.checksum()
    grads = GradientSet([np.ones_like(w) for w in net.weights], [np.ones_like(b) for b in net.biases])
    sgd_step(net, grads, 0.0)
    assert net.checksum() == before


def test_sgd_scalar_arithmetic():
    net = DenseNetwork([LayerSpec(1, 1)], [np.array([[1.0]])], [np.array([0.0])])
    sgd_step(net, GradientSet([np.array([[2.0]])], [np.array([0.0])]), 0.1)
    assert net.weights[0][0, 0] == pytest.approx(0.8)


def test_sgd_two_steps_equal_one_double_step():
    rng = make_rng(9)
    a = random_net(rng, [3, 4, 1])
    b = a.copy()
    grads = GradientSet([rng.normal(size=w.shape) for w in a.weights], [rng.normal(size=x.shape) for x in a.biases])
    sgd_step(sgd_step(a, grads, 0.05), grads, 0.05)
    sgd_step(b, grads, 0.1)
    np.testing.assert_allclose(a.flat_parameters(), b.flat_parameters(), rtol=0, atol=1e-14)


def test_sgd_refuses_non_finite_gradient():
    net = DenseNetwork([LayerSpec(1, 1)], [np.array([[1.0]])], [np.array([0.0])])
    before = net.checksum()
    with pytest.raises(NumericError):
        sgd_step(net, GradientSet([np.array([[np.inf]])], [np.array([0.0])]), 0.1)
    assert net.checksum() == before


def test_bce_clamp_boundary():
    _, per, _ = binary_cross_entropy([0.0, 1.0], [0, 1])
    np.testing.assert_allclose(per, -np.log(1 - 1e-7))


def test_bce_half_is_ln2():
    loss, _, _ = binary_cross_entropy(np.full(6, 0.5), [0, 1, 1, 0, 1, 0])
    assert loss == pytest.approx(np.log(2))


def test_bce_weighted_mean():
    preds, targets = [0.3, 0.8], [1, 1]
    _, per, _ = binary_cross_entropy(preds, targets)
    loss, _, _ = binary_cross_entropy(preds, targets, sample_weights=[2.0, 0.0])
    assert loss == pytest.approx(per[0])


def test_bce_length_mismatch():
    with pytest.raises(UsageError):
        binary_cross_entropy([0.5, 0.5], [1])
    with pytest.raises(UsageError):
        binary_cross_entropy([0.5, 0.5], [1, 0], sample_weights=[1.0])


# beyond |x| ~ 36.7 float64 rounds sigmoid to exactly 1.0
@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-36, 36), min_size=1, max_size=20))
def test_sigmoid_outputs_strictly_inside_unit_interval(values):
    net = DenseNetwork([LayerSpec(1, 1, "sigmoid")], [np.array([[1.0]])], [np.array([0.0])])
    out = forward(net, np.array(values)[:, None])[0]
    assert np.all((out > 0) & (out < 1))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.sampled_from([0.0, 1.0, 0.5, 1e-300, 1 - 1e-17]), min_size=1, max_size=10),
       st.data())
def test_bce_finite_at_extremes(preds, data):
    targets = data.draw(st.lists(st.sampled_from([0, 1]), min_size=len(preds), max_size=len(preds)))
    loss, per, grad = binary_cross_entropy(preds, targets)
    assert np.isfinite(loss) and np.all(np.isfinite(per)) and np.all(np.isfinite(grad))
