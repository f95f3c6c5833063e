r"""Data-importance indicators and the model compression used to evaluate them.

The closed-form indicators all share one structure: a channel term that only
depends on the receive SNR plus a data term evaluated on the device buffer.
For the margin-based measures this follows from the decoded sample being the
clean sample plus noise of variance 1/SNR per entry, which shifts the expected
squared margin distance by exactly 1/SNR.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .probcls import SoftmaxClassifier
from .svm import (
    LinearModel,
    MulticlassModel,
    component_scores,
    hamming_distances,
    output_score,
    support_vector_value,
)


class DiiKind(Enum):
    """Which indicator produced a value; additive kinds decompose as -1/SNR + data term."""

    BINARY_MARGIN = "binary-margin"
    MULTICLASS_MARGIN = "multiclass-margin"
    POSTERIOR_ENTROPY = "posterior-entropy"
    LABELED_MARGIN = "labeled-margin"

    @property
    def additive(self) -> bool:
        return self is not DiiKind.LABELED_MARGIN


@dataclass(frozen=True)
class DiiValue:
    """One device's importance report: the scalar and the buffer slot that achieved it."""

    value: float
    kind: DiiKind
    best_sample_index: int


@dataclass(frozen=True)
class CompressionSpec:
    """Keep the ``ratio`` fraction of largest-magnitude weights; biases survive."""

    ratio: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.ratio <= 1.0:
            raise ValueError(f"ratio must lie in (0, 1], got {self.ratio}")


def _check_snr(snr: float) -> float:
    if not snr > 0.0:
        raise ValueError(f"receive SNR must be positive, got {snr}")
    return float(snr)


def distance_uncertainty(model: LinearModel, x: np.ndarray):
    """Negative squared margin distance; larger means closer to the boundary."""
    scores = output_score(model, x)
    return -(np.asarray(scores) ** 2) if np.ndim(scores) else -(scores**2)


def entropy_uncertainty(model: SoftmaxClassifier, x: np.ndarray):
    """Shannon entropy of the posterior, batched over leading axes."""
    return posterior_entropy(model.predict_proba(np.asarray(x, dtype=float)))


def posterior_entropy(probs: np.ndarray):
    probs = np.asarray(probs, dtype=float)
    terms = np.where(probs > 0.0, probs * np.log(np.where(probs > 0.0, probs, 1.0)), 0.0)
    entropy = -np.sum(terms, axis=-1)
    return float(entropy) if np.ndim(entropy) == 0 else entropy


def expected_received_distance_sq(model: LinearModel, x: np.ndarray, snr: float) -> float:
    """Mean squared margin distance of the noisy decoded copy of ``x``."""
    return float(output_score(model, x) ** 2 + 1.0 / _check_snr(snr))


def buffer_margin_scores(model: LinearModel, features: np.ndarray) -> np.ndarray:
    """Margin distances over a buffer touching only nonzero weights.

    With a compressed model the multiply count is the number of surviving
    weights times the buffer size.
    """
    X = np.asarray(features, dtype=float)
    norm = model.weight_norm
    if norm == 0.0:
        raise ValueError("zero weight vector has no margin geometry")
    support = np.flatnonzero(model.weights)
    return (X[:, support] @ model.weights[support] + model.bias) / norm


def _best(uncertainties: np.ndarray) -> int:
    # np.argmax takes the first maximum, which is the smallest buffer slot
    return int(np.argmax(uncertainties))


def dii_unlabeled(model: LinearModel, features: np.ndarray, snr: float) -> DiiValue:
    """Binary-margin indicator: -1/SNR plus the buffer's best distance uncertainty."""
    snr = _check_snr(snr)
    uncertainty = -(buffer_margin_scores(model, features) ** 2)
    if uncertainty.size == 0:
        raise ValueError("empty buffer has no importance")
    best = _best(uncertainty)
    return DiiValue(-1.0 / snr + float(uncertainty[best]), DiiKind.BINARY_MARGIN, best)


def dii_multiclass(model: MulticlassModel, features: np.ndarray, snr: float) -> DiiValue:
    """Pairwise-margin indicator using only the separators active for the decoded label."""
    snr = _check_snr(snr)
    X = np.asarray(features, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("need a nonempty 2-D buffer")
    scores = component_scores(model, X)
    decoded = np.argmin(hamming_distances(model.matrix, scores), axis=-1)
    active = np.abs(model.matrix)[decoded]
    uncertainty = -np.sum(active * scores**2, axis=-1) / (model.class_count - 1)
    best = _best(uncertainty)
    return DiiValue(-1.0 / snr + float(uncertainty[best]), DiiKind.MULTICLASS_MARGIN, best)


def dii_generic(model: SoftmaxClassifier, features: np.ndarray, snr: float) -> DiiValue:
    """Model-agnostic indicator: -1/SNR plus the buffer's best posterior entropy."""
    snr = _check_snr(snr)
    X = np.asarray(features, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("need a nonempty 2-D buffer")
    uncertainty = entropy_uncertainty(model, X)
    best = _best(uncertainty)
    return DiiValue(-1.0 / snr + float(uncertainty[best]), DiiKind.POSTERIOR_ENTROPY, best)


def dii_labeled(
    model: LinearModel,
    features: np.ndarray,
    labels: np.ndarray,
    snr: float,
) -> DiiValue:
    r"""Label-aware indicator \sqrt{SNR} max(0, hinge argument), maximized over the buffer.

    Not additive in the channel term: the SNR scales the data term instead.
    """
    snr = _check_snr(snr)
    X = np.asarray(features, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("need a nonempty 2-D buffer")
    margins = np.maximum(0.0, support_vector_value(model, X, labels))
    best = _best(margins)
    return DiiValue(math.sqrt(snr) * float(margins[best]), DiiKind.LABELED_MARGIN, best)


def labeled_update_probability(model: LinearModel, x: np.ndarray, label: int, snr: float) -> float:
    r"""Probability the noisy copy of a margin-supporting sample still supports it.

    The decoded hinge argument is Gaussian around the clean one with variance
    ||w||^2 / SNR, so the probability is \Phi(value / (||w|| / \sqrt{SNR})).
    """
    snr = _check_snr(snr)
    value = support_vector_value(model, x, label)
    if value < 0.0:
        raise ValueError(f"sample does not support the margin (hinge argument {value:.3g})")
    norm = model.weight_norm
    if norm == 0.0:
        raise ValueError("zero weight vector has no margin geometry")
    return 0.5 * (1.0 + math.erf(value / (norm * math.sqrt(2.0 / snr))))


def transmit_snr_weight(transmit_power: float, noise_variance: float, gain: complex) -> float:
    """Channel term written with transmit-side quantities, -1 / (2 P |h|^2 / sigma^2)."""
    power_gain = abs(gain) ** 2
    if power_gain == 0.0 or not transmit_power > 0.0:
        raise ValueError("need a positive transmit power and a nonzero gain")
    return -noise_variance / (transmit_power * 2.0 * power_gain)


def _prune_flat(flat: np.ndarray, keep: int) -> np.ndarray:
    order = np.argsort(-np.abs(flat), kind="stable")
    pruned = np.zeros_like(flat)
    pruned[order[:keep]] = flat[order[:keep]]
    return pruned


def compress_model(model, spec: CompressionSpec):
    """Magnitude-prune to ceil(ratio * weight_count) weights; ties keep lower indices.

    Accepts a binary separator, a pairwise multi-class model (pruned per
    component) or a posterior classifier (pruned globally across layers,
    biases untouched).  Ratio 1 returns the model unchanged.
    """
    if spec.ratio == 1.0:
        return model
    if isinstance(model, LinearModel):
        keep = math.ceil(spec.ratio * model.weights.size)
        return LinearModel(_prune_flat(model.weights, keep), model.bias)
    if isinstance(model, MulticlassModel):
        pruned = tuple(compress_model(m, spec) for m in model.components)
        return MulticlassModel(pruned, model.matrix, model.class_pairs)
    if isinstance(model, SoftmaxClassifier):
        flat = np.concatenate([W.ravel() for W, _ in model.layers])
        keep = math.ceil(spec.ratio * flat.size)
        flat = _prune_flat(flat, keep)
        clone = model.copy()
        pos = 0
        clone.layers = []
        for W, b in model.layers:
            clone.layers.append((flat[pos : pos + W.size].reshape(W.shape), b.copy()))
            pos += W.size
        return clone
    raise TypeError(f"cannot compress {type(model).__name__}")
