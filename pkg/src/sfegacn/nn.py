"""Small dense-network engine: forward pass, analytic backprop and plain SGD.

Everything runs in float64 numpy. A :class:`DenseNet` is a stack of affine
layers, each followed by an activation tag. Losses are fused with the output
activation (sigmoid + binary cross-entropy, softmax + cross-entropy) so the
gradient with respect to the output logits is computed without dividing by
saturated probabilities.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, xlogy

from .exceptions import ConfigError, NumericError, ShapeError

ACTIVATIONS = ("linear", "sigmoid", "relu", "tanh", "softmax")


@dataclass(frozen=True)
class TrainConfig:
    """Optimisation settings for :func:`train_net`."""

    learning_rate: float = 0.1
    batch_size: int = 32
    epochs: int = 50
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if int(self.batch_size) < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if int(self.epochs) < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if int(self.seed) < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")


@dataclass
class ParamSnapshot:
    """Flat copy of every weight and bias of a net, plus its layer dims."""

    values: np.ndarray
    layer_dims: tuple
    use_bias: bool = True

    def __len__(self):
        return len(self.values)


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _activate(tag, z):
    if tag == "linear":
        return z
    if tag == "sigmoid":
        return expit(z)
    if tag == "relu":
        return np.maximum(z, 0.0)
    if tag == "tanh":
        return np.tanh(z)
    if tag == "softmax":
        return _softmax(z)
    raise ConfigError(f"unknown activation {tag!r}")


def _activation_grad(tag, z, a):
    # derivative of a = act(z), evaluated elementwise; softmax is only
    # supported fused with cross-entropy at the output
    if tag == "linear":
        return np.ones_like(z)
    if tag == "sigmoid":
        return a * (1.0 - a)
    if tag == "relu":
        return (z > 0).astype(z.dtype)
    if tag == "tanh":
        return 1.0 - a * a
    raise ConfigError(f"activation {tag!r} cannot be used on a hidden layer")


class DenseNet:
    """Fully connected feed-forward network.

    Parameters
    ----------
    layer_dims : sequence of int
        Widths ``(input, hidden..., output)``.
    activations : sequence of str or str
        One tag per layer (``len(layer_dims) - 1`` of them). A single string
        is broadcast to every layer.
    seed : int
        Seed for the weight initialisation. Weights are drawn uniformly from
        ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``; biases start at zero.
    use_bias : bool
        If False the layers are pure matrix products.
    """

    def __init__(self, layer_dims, activations, seed=0, use_bias=True):
        dims = tuple(int(d) for d in layer_dims)
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ConfigError(f"layer_dims must hold >= 2 positive widths, got {dims}")
        if isinstance(activations, str):
            activations = [activations] * (len(dims) - 1)
        activations = tuple(activations)
        if len(activations) != len(dims) - 1:
            raise ConfigError(
                f"need {len(dims) - 1} activations for dims {dims}, got {len(activations)}"
            )
        for pos, tag in enumerate(activations):
            if tag not in ACTIVATIONS:
                raise ConfigError(f"unknown activation {tag!r}")
            if tag == "softmax" and pos != len(activations) - 1:
                raise ConfigError("softmax is only allowed on the output layer")
        self.layer_dims = dims
        self.activations = activations
        self.seed = int(seed)
        self.use_bias = bool(use_bias)

        rng = np.random.default_rng(self.seed)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    def __repr__(self):
        return f"DenseNet(layer_dims={list(self.layer_dims)}, activations={list(self.activations)})"

    @property
    def n_params(self):
        n = sum(w.size for w in self.weights)
        if self.use_bias:
            n += sum(b.size for b in self.biases)
        return n

    def copy(self):
        other = DenseNet.__new__(DenseNet)
        other.layer_dims = self.layer_dims
        other.activations = self.activations
        other.seed = self.seed
        other.use_bias = self.use_bias
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        return other

    def _check_input(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.layer_dims[0]:
            raise ShapeError(
                f"layer 0 expects input width {self.layer_dims[0]}, got shape {X.shape}"
            )
        return X

    def forward(self, X, return_logits=False):
        """Return the output activations for a batch (rows are samples)."""
        out, cache = self.forward_cache(X)
        if return_logits:
            return cache[-1][1]
        return out

    def forward_cache(self, X):
        """Forward pass that also returns ``[(a_in, z, a_out), ...]`` per layer."""
        a = self._check_input(X)
        cache = []
        for W, b, tag in zip(self.weights, self.biases, self.activations):
            z = a @ W
            if self.use_bias:
                z = z + b
            a_out = _activate(tag, z)
            cache.append((a, z, a_out))
            a = a_out
        return a, cache

    def backward(self, cache, grad_logits):
        """Backpropagate a gradient given with respect to the output logits.

        Returns ``(grad_weights, grad_biases, grad_input)``.
        """
        g = np.asarray(grad_logits, dtype=np.float64)
        n_layers = len(self.weights)
        grad_w = [None] * n_layers
        grad_b = [None] * n_layers
        for layer in range(n_layers - 1, -1, -1):
            a_in, _, _ = cache[layer]
            grad_w[layer] = a_in.T @ g
            grad_b[layer] = g.sum(axis=0) if self.use_bias else np.zeros_like(self.biases[layer])
            g = g @ self.weights[layer].T
            if layer > 0:
                _, z_prev, a_prev = cache[layer - 1]
                g = g * _activation_grad(self.activations[layer - 1], z_prev, a_prev)
        return grad_w, grad_b, g

    def apply_gradients(self, grad_w, grad_b, lr):
        for layer in range(len(self.weights)):
            self.weights[layer] -= lr * grad_w[layer]
            if self.use_bias:
                self.biases[layer] -= lr * grad_b[layer]


def forward(net, batch):
    return net.forward(batch)


def binary_cross_entropy(pred, target):
    """Mean BCE between probabilities and targets, with ``0 log 0 = 0``."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    return float(-np.mean(xlogy(target, pred) + xlogy(1.0 - target, 1.0 - pred)))


def loss_and_logit_grad(net, z, targets, loss):
    """Loss value and its gradient with respect to the output logits ``z``."""
    out_tag = net.activations[-1]
    n = z.shape[0]
    if loss == "bce":
        if out_tag != "sigmoid":
            raise ConfigError("bce loss requires a sigmoid output layer")
        # softplus(z) - y z, averaged over every output element
        value = np.mean(np.maximum(z, 0.0) - targets * z + np.log1p(np.exp(-np.abs(z))))
        grad = (expit(z) - targets) / z.size
    elif loss == "ce":
        if out_tag != "softmax":
            raise ConfigError("ce loss requires a softmax output layer")
        shifted = z - z.max(axis=1, keepdims=True)
        log_p = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        value = -np.sum(targets * log_p) / n
        grad = (np.exp(log_p) * targets.sum(axis=1, keepdims=True) - targets) / n
    elif loss == "mse":
        if out_tag != "linear":
            raise ConfigError("mse loss requires a linear output layer")
        diff = z - targets
        value = np.mean(diff * diff)
        grad = 2.0 * diff / z.size
    else:
        raise ConfigError(f"unknown loss {loss!r}")
    return float(value), grad


def loss_and_gradients(net, batch, targets, loss="bce"):
    """Return ``(loss, grad_weights, grad_biases)`` for one batch."""
    targets = np.asarray(targets, dtype=np.float64)
    _, cache = net.forward_cache(batch)
    z = cache[-1][1]
    if targets.shape != z.shape:
        raise ShapeError(f"targets shape {targets.shape} does not match output shape {z.shape}")
    value, grad = loss_and_logit_grad(net, z, targets, loss)
    grad_w, grad_b, _ = net.backward(cache, grad)
    return value, grad_w, grad_b


def sgd_step(net, batch, targets, lr, loss="bce"):
    """One plain SGD update in place; returns the mean loss before the step."""
    value, grad_w, grad_b = loss_and_gradients(net, batch, targets, loss)
    if not np.isfinite(value):
        raise NumericError(f"non-finite {loss} loss {value}")
    if lr:
        net.apply_gradients(grad_w, grad_b, lr)
    return value


def train_net(net, X, Y, cfg, loss="bce", callback=None):
    """Mini-batch SGD over ``cfg.epochs`` shuffled passes.

    Returns the list of per-epoch mean losses (each the average of the batch
    losses measured before their updates). ``callback(epoch, net)`` runs after
    every epoch if given.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if len(X) != len(Y):
        raise ShapeError(f"{len(X)} inputs but {len(Y)} targets")
    history = []
    if len(X) == 0:
        return history
    rng = np.random.default_rng(cfg.seed)
    bs = int(cfg.batch_size)
    for epoch in range(int(cfg.epochs)):
        order = rng.permutation(len(X))
        total = 0.0
        for batch_no, start in enumerate(range(0, len(X), bs)):
            idx = order[start:start + bs]
            try:
                value = sgd_step(net, X[idx], Y[idx], cfg.learning_rate, loss)
            except NumericError as exc:
                raise NumericError(str(exc), epoch=epoch, batch=batch_no) from None
            total += value * len(idx)
        history.append(total / len(X))
        if callback is not None:
            callback(epoch, net)
    return history


def snapshot(net):
    parts = []
    for W, b in zip(net.weights, net.biases):
        parts.append(W.ravel())
        if net.use_bias:
            parts.append(b)
    return ParamSnapshot(np.concatenate(parts).copy(), net.layer_dims, net.use_bias)


def restore(net, snap):
    """Load a snapshot into ``net`` in place and return the net."""
    if tuple(snap.layer_dims) != net.layer_dims or snap.use_bias != net.use_bias:
        raise ShapeError(
            f"snapshot of dims {tuple(snap.layer_dims)} cannot be restored into {net.layer_dims}"
        )
    if len(snap.values) != net.n_params:
        raise ShapeError(f"snapshot holds {len(snap.values)} values, net needs {net.n_params}")
    pos = 0
    for layer, W in enumerate(net.weights):
        net.weights[layer] = snap.values[pos:pos + W.size].reshape(W.shape).copy()
        pos += W.size
        if net.use_bias:
            size = net.biases[layer].size
            net.biases[layer] = snap.values[pos:pos + size].copy()
            pos += size
    return net


def interpolate_params(snap_back, snap_now, c_r):
    """``snap_back + c_r * (snap_now - snap_back)``, elementwise."""
    if not 0.0 <= c_r <= 1.0:
        raise ConfigError(f"rollback coefficient must lie in [0, 1], got {c_r}")
    if tuple(snap_back.layer_dims) != tuple(snap_now.layer_dims) or len(snap_back) != len(snap_now):
        raise ShapeError("snapshots come from differently shaped nets")
    if c_r == 0.0:
        values = snap_back.values.copy()
    elif c_r == 1.0:
        values = snap_now.values.copy()
    else:
        values = snap_back.values + c_r * (snap_now.values - snap_back.values)
    return ParamSnapshot(values, tuple(snap_now.layer_dims), snap_now.use_bias)


def param_count(layer_dims, use_bias=True):
    dims = list(layer_dims)
    return sum(a * b + (b if use_bias else 0) for a, b in zip(dims[:-1], dims[1:]))
