import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import dense_forward
from shelfrl.nn import DenseNet, SgdConfig, gradient_check, load_weights, save_weights, softmax


def _zero(net):
    for p in net.params():
        p[...] = 0.0
    return net


def test_zero_net_outputs_zero():
    net = _zero(DenseNet([3, 5, 2], ["tanh", "tanh"], seed=0))
    np.testing.assert_array_equal(net.forward(np.ones(3)), 0.0)


def test_affine_single_neuron():
    net = DenseNet([1, 1], ["linear"], seed=0)
    net.weights[0][...] = 2.0
    net.biases[0][...] = 1.0
    assert net.forward([3.0])[0] == 7.0


def test_forward_matches_matrix_oracle():
    rng = np.random.default_rng(3)
    for act in (["tanh", "tanh"], ["tanh", "relu"], ["relu", "linear"]):
        net = DenseNet([8, 4, 1], act, seed=int(rng.integers(1000)))
        X = rng.normal(size=(16, 8))
        np.testing.assert_allclose(net.forward(X), dense_forward(net.weights, net.biases, act, X), rtol=0, atol=1e-12)


def test_forward_rejects_bad_input():
    net = DenseNet([3, 2], ["tanh"], seed=0)
    with pytest.raises(ValueError):
        net.forward(np.ones(4))
    with pytest.raises(ValueError):
        net.forward([1.0, np.inf, 0.0])


def test_train_on_own_output_is_noop():
    net = DenseNet([4, 6, 3], ["tanh", "linear"], seed=1)
    X = np.random.default_rng(0).normal(size=(5, 4))
    before = [p.copy() for p in net.params()]
    loss = net.train_batch(X, net.forward(X))
    assert loss == 0.0
    for a, b in zip(before, net.params()):
        np.testing.assert_array_equal(a, b)


def test_single_linear_neuron_gradient():
    net = DenseNet([2, 1], ["linear"], seed=0)
    net.weights[0][...] = [[0.5], [-1.0]]
    net.biases[0][...] = 0.25
    x, y = np.array([[2.0, 3.0]]), np.array([[1.0]])
    yhat = 0.5 * 2 - 3 + 0.25
    _, gw, gb = net.loss_and_gradients(x, y)
    np.testing.assert_allclose(gw[0][:, 0], 2 * (yhat - 1.0) * x[0], rtol=0, atol=1e-12)
    assert gb[0][0] == pytest.approx(2 * (yhat - 1.0), abs=1e-12)


def test_zero_momentum_is_plain_step():
    net = DenseNet([3, 4, 2], ["tanh", "linear"], seed=5)
    ref = net.copy()
    rng = np.random.default_rng(1)
    X, T = rng.normal(size=(6, 3)), rng.normal(size=(6, 2))
    _, gw, gb = ref.loss_and_gradients(X, T)
    net.train_batch(X, T, SgdConfig(0.1, 0.0, 6))
    for w, w0, g in zip(net.weights, ref.weights, gw):
        np.testing.assert_allclose(w, w0 - 0.1 * g, rtol=0, atol=1e-15)
    for b, b0, g in zip(net.biases, ref.biases, gb):
        np.testing.assert_allclose(b, b0 - 0.1 * g, rtol=0, atol=1e-15)


def test_momentum_accumulates():
    net = DenseNet([2, 1], ["linear"], seed=2)
    X, T = np.array([[1.0, -1.0]]), np.array([[3.0]])
    cfg = SgdConfig(0.01, 0.8, 1)
    w0 = net.weights[0].copy()
    _, g1, _ = net.loss_and_gradients(X, T)
    net.train_batch(X, T, cfg)
    _, g2, _ = net.loss_and_gradients(X, T)
    net.train_batch(X, T, cfg)
    m = 0.8 * (-0.01 * g1[0]) - 0.01 * g2[0]
    np.testing.assert_allclose(net.weights[0], w0 - 0.01 * g1[0] + m, rtol=0, atol=1e-14)


def test_sgd_config_validation():
    for bad in [(0.0, 0.8, 32), (0.1, 1.0, 32), (0.1, -0.1, 32), (0.1, 0.5, 0)]:
        with pytest.raises(ValueError):
            SgdConfig(*bad)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_step_aborts():
    net = DenseNet([1, 1], ["linear"], seed=0)
    net.weights[0][...] = 1e300
    with pytest.raises(FloatingPointError):
        net.train_batch(np.array([[1e10]]), np.array([[0.0]]))


@pytest.mark.parametrize("sizes,acts", [([8, 4, 1], ["tanh", "tanh"]), ([8, 10, 10, 5], ["tanh", "tanh", "relu"])])
def test_gradient_check_mse(sizes, acts):
    rng = np.random.default_rng(sum(sizes))
    net = DenseNet(sizes, acts, rng=rng)
    for b in net.biases:
        b[...] = rng.uniform(0.05, 0.2, b.shape)
    X = rng.normal(size=(4, sizes[0]))
    T = rng.normal(size=(4, sizes[-1]))
    assert gradient_check(net, X, T, "mse") < 1e-4


def test_gradient_check_ace():
    rng = np.random.default_rng(9)
    net = DenseNet([8, 10, 10, 5], ["tanh", "tanh", "linear"], rng=rng)
    X = rng.normal(size=(6, 8))
    T = np.zeros((6, 5))
    T[np.arange(6), rng.integers(0, 5, 6)] = rng.normal(size=6)
    assert gradient_check(net, X, T, "ace") < 1e-4


def test_gradient_check_linear_is_tight():
    rng = np.random.default_rng(4)
    net = DenseNet([3, 2], ["linear"], rng=rng)
    assert gradient_check(net, rng.normal(size=(5, 3)), rng.normal(size=(5, 2))) < 1e-8


def test_gradient_check_zero_gradient_is_zero():
    net = DenseNet([3, 2], ["linear"], seed=0)
    X = np.ones((2, 3))
    assert gradient_check(net, X, net.forward(X)) == 0.0


def test_softmax_rows_sum_to_one():
    p = softmax(np.array([[1000.0, 0.0], [1.0, 1.0]]))
    np.testing.assert_allclose(p.sum(axis=1), 1.0)
    np.testing.assert_allclose(p[1], [0.5, 0.5])


def test_weight_blob_roundtrip():
    net = DenseNet([8, 42, 42, 21], ["tanh", "tanh", "relu"], seed=12)
    blob = save_weights(net)
    assert blob[:8] == b"SHELFNN\x00"
    back = load_weights(blob)
    assert save_weights(back) == blob
    X = np.random.default_rng(0).normal(size=(3, 8))
    np.testing.assert_array_equal(back.forward(X), net.forward(X))


def test_weight_blob_tampering_detected():
    import struct
    import zlib

    blob = bytearray(save_weights(DenseNet([3, 4, 2], ["tanh", "linear"], seed=0)))
    bad = bytearray(blob)
    bad[-20] ^= 0xFF
    with pytest.raises(ValueError, match="checksum"):
        load_weights(bytes(bad))
    # change a layer width and re-sign: the size check must still catch it
    off = 8 + 6
    hdr = bytearray(blob[:-4])
    struct.pack_into("<I", hdr, off + 4, 5)
    resigned = bytes(hdr) + struct.pack("<I", zlib.crc32(bytes(hdr)))
    with pytest.raises(ValueError, match="size"):
        load_weights(resigned)
    ver = bytearray(blob[:-4])
    struct.pack_into("<H", ver, 8, 99)
    with pytest.raises(ValueError, match="version"):
        load_weights(bytes(ver) + struct.pack("<I", zlib.crc32(bytes(ver))))
    with pytest.raises(ValueError):
        load_weights(b"nonsense")


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_same_seed_same_training_trajectory(seed):
    rng = np.random.default_rng(seed)
    X, T = rng.normal(size=(8, 3)), rng.normal(size=(8, 2))
    nets = [DenseNet([3, 4, 2], ["tanh", "linear"], seed=seed) for _ in range(2)]
    for _ in range(3):
        losses = [n.train_batch(X, T) for n in nets]
        assert losses[0] == losses[1]
    for a, b in zip(nets[0].params(), nets[1].params()):
        np.testing.assert_array_equal(a, b)
