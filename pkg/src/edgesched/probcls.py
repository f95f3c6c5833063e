"""Posterior-output classifiers trained by gradient descent with momentum.

Covers plain multinomial logistic regression (no hidden layer) and a
one-hidden-layer network, both minimizing mean cross-entropy on the current
batch.  Incremental refits start from the previous parameters, which is what
the round-by-round simulator relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class OptimizerConfig:
    step_size: float = 0.05
    momentum: float = 0.9
    epochs: int = 120

    def __post_init__(self) -> None:
        if not self.step_size > 0.0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def _pruned_matmul(X: np.ndarray, W: np.ndarray) -> np.ndarray:
    """X @ W.T touching only W's nonzero entries.

    After magnitude pruning most of W is zero; slicing per output unit keeps
    the multiply count proportional to the surviving weights.
    """
    nonzero = np.count_nonzero(W)
    if nonzero >= 0.5 * W.size:
        return X @ W.T
    out = np.zeros(X.shape[:-1] + (W.shape[0],))
    for unit in range(W.shape[0]):
        cols = np.flatnonzero(W[unit])
        if len(cols):
            out[..., unit] = X[..., cols] @ W[unit, cols]
    return out


class SoftmaxClassifier:
    """Softmax classifier over 1-based labels, optionally with a hidden layer.

    Parameters live in ``layers``, a list of (W, b) pairs applied in order;
    every layer but the last is followed by the activation.  All-zero
    parameters produce the uniform posterior.
    """

    def __init__(
        self,
        input_dim: int,
        class_count: int,
        hidden_units: int = 0,
        activation: str = "tanh",
        rng: np.random.Generator | None = None,
    ):
        if input_dim < 1 or class_count < 2:
            raise ValueError("need input_dim >= 1 and class_count >= 2")
        if activation not in ("tanh", "relu"):
            raise ValueError(f"unknown activation {activation!r}")
        self.input_dim = input_dim
        self.class_count = class_count
        self.hidden_units = hidden_units
        self.activation = activation
        shapes = self.layer_shapes(input_dim, class_count, hidden_units)
        self.layers: list[tuple[np.ndarray, np.ndarray]] = []
        for out_dim, in_dim in shapes:
            if hidden_units and rng is not None:
                W = rng.standard_normal((out_dim, in_dim)) / np.sqrt(in_dim)
            else:
                W = np.zeros((out_dim, in_dim))
            self.layers.append((W, np.zeros(out_dim)))

    @staticmethod
    def layer_shapes(input_dim: int, class_count: int, hidden_units: int):
        if hidden_units:
            return [(hidden_units, input_dim), (class_count, hidden_units)]
        return [(class_count, input_dim)]

    def copy(self) -> "SoftmaxClassifier":
        clone = SoftmaxClassifier(self.input_dim, self.class_count, self.hidden_units, self.activation)
        clone.layers = [(W.copy(), b.copy()) for W, b in self.layers]
        return clone

    def _activate(self, h: np.ndarray) -> np.ndarray:
        return np.tanh(h) if self.activation == "tanh" else np.maximum(h, 0.0)

    def _activate_grad(self, a: np.ndarray) -> np.ndarray:
        return 1.0 - a**2 if self.activation == "tanh" else (a > 0.0).astype(float)

    def logits(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = X
        for depth, (W, b) in enumerate(self.layers):
            out = _pruned_matmul(out, W) + b
            if depth < len(self.layers) - 1:
                out = self._activate(out)
        return out

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return softmax(self.logits(X))

    def predict(self, X: np.ndarray) -> np.ndarray:
        """1-based labels; argmax ties resolve to the smallest label."""
        return np.argmax(self.logits(X), axis=-1) + 1

    @property
    def weight_count(self) -> int:
        """Number of multiplicative weights, biases excluded."""
        return sum(W.size for W, _ in self.layers)

    def get_params(self) -> np.ndarray:
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in self.layers])

    def set_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        expected = sum(W.size + b.size for W, b in self.layers)
        if flat.size != expected:
            raise ValueError(f"expected {expected} parameters, got {flat.size}")
        pos = 0
        rebuilt = []
        for W, b in self.layers:
            w_new = flat[pos : pos + W.size].reshape(W.shape)
            pos += W.size
            b_new = flat[pos : pos + b.size].copy()
            pos += b.size
            rebuilt.append((w_new, b_new))
        self.layers = rebuilt


def posterior(model: SoftmaxClassifier, x: np.ndarray) -> np.ndarray:
    """Class posterior for a single sample, shape (class_count,)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != model.input_dim:
        raise ValueError(f"expected a vector of length {model.input_dim}, got shape {x.shape}")
    return model.predict_proba(x[None, :])[0]


def _one_hot(labels: np.ndarray, class_count: int) -> np.ndarray:
    labels = np.asarray(labels).ravel()
    if np.any((labels < 1) | (labels > class_count)):
        raise ValueError(f"labels must lie in 1..{class_count}")
    hot = np.zeros((len(labels), class_count))
    hot[np.arange(len(labels)), labels - 1] = 1.0
    return hot


def cross_entropy(model: SoftmaxClassifier, X: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood of 1-based labels."""
    probs = model.predict_proba(np.asarray(X, dtype=float))
    hot = _one_hot(labels, model.class_count)
    return float(-np.mean(np.log(np.sum(probs * hot, axis=-1) + 1e-300)))


def gradient(model: SoftmaxClassifier, X: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Flat gradient of :func:`cross_entropy`, laid out like ``get_params``."""
    X = np.asarray(X, dtype=float)
    hot = _one_hot(labels, model.class_count)
    n = X.shape[0]

    activations = [X]
    out = X
    for depth, (W, b) in enumerate(model.layers):
        out = out @ W.T + b
        if depth < len(model.layers) - 1:
            out = model._activate(out)
            activations.append(out)
    delta = (softmax(out) - hot) / n

    grads: list[np.ndarray] = []
    for depth in range(len(model.layers) - 1, -1, -1):
        W, _ = model.layers[depth]
        inbound = activations[depth]
        grads.append(np.concatenate([(delta.T @ inbound).ravel(), delta.sum(axis=0)]))
        if depth > 0:
            delta = (delta @ W) * model._activate_grad(inbound)
    return np.concatenate(grads[::-1])


def fit_incremental(
    model: SoftmaxClassifier,
    X: np.ndarray,
    labels: np.ndarray,
    config: OptimizerConfig = OptimizerConfig(),
) -> SoftmaxClassifier:
    """Return a copy of ``model`` refined on the batch; the input is untouched.

    Runs full-batch gradient descent with momentum for ``config.epochs``
    epochs.  The velocity starts at zero on every call.
    """
    refined = model.copy()
    params = refined.get_params()
    velocity = np.zeros_like(params)
    for _ in range(config.epochs):
        refined.set_params(params)
        velocity = config.momentum * velocity - config.step_size * gradient(refined, X, labels)
        params = params + velocity
    refined.set_params(params)
    return refined
