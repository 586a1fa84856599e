"""Small dense networks trained with momentum SGD, in float64 numpy."""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

ACTIVATIONS = ("linear", "tanh", "relu")
PROB_FLOOR = 1e-8

_MAGIC = b"SHELFNN\x00"
_VERSION = 1


@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float = 0.025
    momentum: float = 0.8
    batch_size: int = 32

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")


def _act(name, z):
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


def _act_grad(name, z, a):
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return (z > 0).astype(np.float64)
    return np.ones_like(z)


def softmax(z):
    z = np.atleast_2d(z)
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


class DenseNet:
    """Fully connected feed-forward network.

    ``sizes`` lists layer widths from input to output and ``activations`` has
    one tag per weight layer. Weights are stored as ``(fan_in, fan_out)``.
    """

    def __init__(self, sizes, activations, seed=None, rng=None):
        sizes = [int(s) for s in sizes]
        activations = list(activations)
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ValueError(f"invalid layer sizes {sizes}")
        if len(activations) != len(sizes) - 1:
            raise ValueError("need one activation per weight layer")
        for a in activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        self.sizes = sizes
        self.activations = activations
        rng = np.random.default_rng(seed) if rng is None else rng
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))
        self.reset_momentum()

    def reset_momentum(self):
        self._m_w = [np.zeros_like(w) for w in self.weights]
        self._m_b = [np.zeros_like(b) for b in self.biases]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def params(self):
        """Parameter arrays in serialization order (W0, b0, W1, b1, ...)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def copy(self) -> "DenseNet":
        other = DenseNet.__new__(DenseNet)
        other.sizes = list(self.sizes)
        other.activations = list(self.activations)
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        other.reset_momentum()
        return other

    def copy_weights_from(self, other: "DenseNet"):
        if other.sizes != self.sizes or other.activations != self.activations:
            raise ValueError("architecture mismatch")
        for dst, src in zip(self.params(), other.params()):
            dst[...] = src

    def _check_input(self, X):
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.ndim != 2 or X.shape[1] != self.sizes[0]:
            raise ValueError(f"expected input width {self.sizes[0]}, got shape {np.shape(X)}")
        if not np.all(np.isfinite(X)):
            raise ValueError("non-finite network input")
        return X, single

    def forward(self, X):
        X, single = self._check_input(X)
        a = X
        for w, b, name in zip(self.weights, self.biases, self.activations):
            a = _act(name, a @ w + b)
        return a[0] if single else a

    __call__ = forward

    def _forward_cache(self, X):
        zs, acts = [], [X]
        a = X
        for w, b, name in zip(self.weights, self.biases, self.activations):
            z = a @ w + b
            a = _act(name, z)
            zs.append(z)
            acts.append(a)
        return zs, acts

    def loss_and_gradients(self, X, targets, loss="mse"):
        """Batch loss and its gradients with respect to every parameter.

        ``loss="mse"`` averages squared error over batch and outputs.
        ``loss="ace"`` is advantage-weighted categorical cross-entropy on the
        softmax of the outputs; ``targets`` then holds the advantage of each
        sample in the column of its chosen action and zeros elsewhere.
        """
        X, _ = self._check_input(X)
        T = np.atleast_2d(np.asarray(targets, dtype=np.float64))
        if T.shape != (X.shape[0], self.sizes[-1]):
            raise ValueError(f"targets shape {T.shape} does not match output {(X.shape[0], self.sizes[-1])}")
        zs, acts = self._forward_cache(X)
        y = acts[-1]
        B = X.shape[0]
        if loss == "mse":
            diff = y - T
            value = float(np.mean(diff * diff))
            grad_y = 2.0 * diff / diff.size
        elif loss == "ace":
            probs = softmax(y)
            live = probs > PROB_FLOOR
            logp = np.log(np.maximum(probs, PROB_FLOOR))
            value = float(-np.sum(T * logp) / B)
            Tl = T * live
            grad_y = (probs * Tl.sum(axis=1, keepdims=True) - Tl) / B
        else:
            raise ValueError(f"unknown loss {loss!r}")

        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        delta = grad_y * _act_grad(self.activations[-1], zs[-1], acts[-1])
        for k in range(len(self.weights) - 1, -1, -1):
            grads_w[k] = acts[k].T @ delta
            grads_b[k] = delta.sum(axis=0)
            if k:
                delta = (delta @ self.weights[k].T) * _act_grad(self.activations[k - 1], zs[k - 1], acts[k])
        return value, grads_w, grads_b

    def train_batch(self, X, targets, config: SgdConfig = SgdConfig(), loss="mse") -> float:
        """One momentum-SGD step; returns the loss before the update."""
        value, gw, gb = self.loss_and_gradients(X, targets, loss)
        if not np.isfinite(value) or not all(np.all(np.isfinite(g)) for g in gw + gb):
            raise FloatingPointError(
                f"non-finite gradient (loss={value!r}, layers={self.sizes}); step aborted"
            )
        lr, mu = config.learning_rate, config.momentum
        for k in range(len(self.weights)):
            self._m_w[k] *= mu
            self._m_w[k] -= lr * gw[k]
            self._m_b[k] *= mu
            self._m_b[k] -= lr * gb[k]
            self.weights[k] += self._m_w[k]
            self.biases[k] += self._m_b[k]
        return value


def forward(net: DenseNet, X):
    return net.forward(X)


def train_batch(net: DenseNet, X, targets, config: SgdConfig = SgdConfig(), loss="mse") -> float:
    return net.train_batch(X, targets, config, loss)


def gradient_check(net: DenseNet, X, targets, loss="mse", h=1e-5) -> float:
    """Largest hybrid relative error between analytic and central-difference gradients."""
    _, gw, gb = net.loss_and_gradients(X, targets, loss)
    analytic = []
    for w, b in zip(gw, gb):
        analytic.extend([w, b])
    worst = 0.0
    for param, grad in zip(net.params(), analytic):
        flat = param.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = net.loss_and_gradients(X, targets, loss)[0]
            flat[i] = orig - h
            down = net.loss_and_gradients(X, targets, loss)[0]
            flat[i] = orig
            numeric = (up - down) / (2 * h)
            err = abs(gflat[i] - numeric) / max(1e-8, abs(gflat[i]) + abs(numeric))
            worst = max(worst, err)
    return worst


def save_weights(net: DenseNet) -> bytes:
    """Serialize architecture and parameters (momentum buffers are not kept)."""
    tags = bytes(ACTIVATIONS.index(a) for a in net.activations)
    body = bytearray(_MAGIC)
    body += struct.pack("<HI", _VERSION, len(net.sizes))
    body += struct.pack(f"<{len(net.sizes)}I", *net.sizes)
    body += tags
    for arr in net.params():
        body += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    body += struct.pack("<I", zlib.crc32(bytes(body)))
    return bytes(body)


def load_weights(blob: bytes) -> DenseNet:
    if len(blob) < len(_MAGIC) + 10 or blob[: len(_MAGIC)] != _MAGIC:
        raise ValueError("not a weight blob")
    (crc,) = struct.unpack("<I", blob[-4:])
    if zlib.crc32(blob[:-4]) != crc:
        raise ValueError("weight blob checksum mismatch")
    off = len(_MAGIC)
    version, n = struct.unpack_from("<HI", blob, off)
    off += 6
    if version != _VERSION:
        raise ValueError(f"unsupported weight blob version {version}")
    sizes = list(struct.unpack_from(f"<{n}I", blob, off))
    off += 4 * n
    tags = blob[off : off + n - 1]
    off += n - 1
    if any(t >= len(ACTIVATIONS) for t in tags):
        raise ValueError("unknown activation tag")
    net = DenseNet.__new__(DenseNet)
    net.sizes = sizes
    net.activations = [ACTIVATIONS[t] for t in tags]
    net.weights, net.biases = [], []
    expected = sum(i * o + o for i, o in zip(sizes[:-1], sizes[1:])) * 8
    if len(blob) - 4 - off != expected:
        raise ValueError("weight blob size does not match its layer header")
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = np.frombuffer(blob, dtype="<f8", count=fan_in * fan_out, offset=off).reshape(fan_in, fan_out)
        off += w.nbytes
        b = np.frombuffer(blob, dtype="<f8", count=fan_out, offset=off)
        off += b.nbytes
        net.weights.append(w.astype(np.float64))
        net.biases.append(b.astype(np.float64))
    net.reset_momentum()
    return net
