r"""Soft-margin linear SVM and its one-versus-one multi-class composition.

The binary trainer runs single-sample dual coordinate ascent on the
bias-regularized dual (the bias is absorbed by adding a constant
``bias_offset`` to every inner product, which keeps each coordinate update in
closed form).  The primal being approximated is

    min_{w, b}  ||w||^2 / 2  +  tradeoff * sum_i max(0, 1 - c_i (w.x_i + b)).

Multi-class models train one binary separator per class pair and decode test
points by a weighted Hamming distance between the vector of separator outputs
and the rows of a {-1, 0, +1} coding matrix.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np


class DegenerateTrainingError(ValueError):
    """Training set lacks one of the two classes."""


class DegenerateModelError(ValueError):
    """Model has a zero weight vector, so margin distances are undefined."""


@dataclass(frozen=True)
class SvmConfig:
    """Solver knobs for :func:`fit_binary`.

    ``tradeoff`` multiplies the hinge loss in the primal objective.
    ``max_iterations`` caps the number of single-sample updates.
    ``tolerance`` is the largest projected-gradient violation allowed at
    convergence.  ``bias_offset`` is the constant added to inner products to
    emulate the bias term; 1.0 matches an appended all-ones feature.
    """

    tradeoff: float = 1.0
    max_iterations: int = 1_000_000
    tolerance: float = 1e-3
    bias_offset: float = 1.0

    def __post_init__(self) -> None:
        if not self.tradeoff > 0.0:
            raise ValueError(f"tradeoff must be positive, got {self.tradeoff}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not self.tolerance > 0.0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if not self.bias_offset > 0.0:
            raise ValueError(f"bias_offset must be positive, got {self.bias_offset}")


@dataclass(frozen=True)
class LinearModel:
    """Separating hyperplane w.x + b = 0."""

    weights: np.ndarray
    bias: float

    @property
    def weight_norm(self) -> float:
        return float(np.linalg.norm(self.weights))


@dataclass
class BinaryFit:
    """Trained separator plus the solver state needed for warm restarts."""

    model: LinearModel
    alpha: np.ndarray
    updates: int
    converged: bool
    kkt_violation: float


def fit_binary(
    features: np.ndarray,
    labels: np.ndarray,
    config: SvmConfig = SvmConfig(),
    alpha0: np.ndarray | None = None,
) -> BinaryFit:
    """Train a binary separator on labels in {-1, +1}.

    ``alpha0`` warm-starts the dual variables; entries are clipped to the box
    and missing trailing entries (new samples) start at zero.  Stops once a
    full sweep sees no projected-gradient violation above ``config.tolerance``
    or the update cap is hit, whichever comes first.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float).ravel()
    if X.ndim != 2:
        raise ValueError(f"features must be 2-D, got shape {X.shape}")
    if len(y) != X.shape[0]:
        raise ValueError(f"{X.shape[0]} samples but {len(y)} labels")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise DegenerateTrainingError("training set must contain both classes")

    n = X.shape[0]
    box = config.tradeoff
    tau = config.bias_offset
    curvature = np.einsum("ij,ij->i", X, X) + tau

    alpha = np.zeros(n)
    if alpha0 is not None:
        alpha0 = np.asarray(alpha0, dtype=float).ravel()
        if len(alpha0) > n:
            raise ValueError(f"warm start has {len(alpha0)} entries for {n} samples")
        alpha[: len(alpha0)] = np.clip(alpha0, 0.0, box)
    w = X.T @ (alpha * y)
    label_sum = float(alpha @ y)

    updates = 0
    converged = False
    worst = np.inf
    while updates < config.max_iterations:
        worst = 0.0
        for i in range(n):
            gradient = 1.0 - y[i] * (X[i] @ w + tau * label_sum)
            a = alpha[i]
            if a <= 0.0:
                violation = max(gradient, 0.0)
            elif a >= box:
                violation = max(-gradient, 0.0)
            else:
                violation = abs(gradient)
            if violation > worst:
                worst = violation
            if violation > 0.0:
                new = min(max(a + gradient / curvature[i], 0.0), box)
                step = new - a
                if step != 0.0:
                    alpha[i] = new
                    w += (step * y[i]) * X[i]
                    label_sum += step * y[i]
            updates += 1
            if updates >= config.max_iterations:
                break
        if worst < config.tolerance:
            converged = True
            break
    bias = _recover_bias(X, y, alpha, w, box, tau, label_sum)
    return BinaryFit(LinearModel(w, bias), alpha, updates, converged, float(worst))


def _recover_bias(X, y, alpha, w, box, tau, label_sum) -> float:
    """Average c_i - w.x_i over margin support vectors; fall back gracefully."""
    slack = 1e-9 * max(1.0, box)
    support = alpha > slack
    margin = support & (alpha < box - slack)
    chosen = margin if np.any(margin) else support
    if not np.any(chosen):
        return tau * label_sum
    residuals = y[chosen] - X[chosen] @ w
    return float(np.mean(residuals))


def train_binary(
    features: np.ndarray,
    labels: np.ndarray,
    config: SvmConfig = SvmConfig(),
) -> LinearModel:
    """Convenience wrapper around :func:`fit_binary` returning only the model."""
    fit = fit_binary(features, labels, config)
    if not fit.converged:
        warnings.warn(
            f"solver hit the {config.max_iterations}-update cap with KKT violation "
            f"{fit.kkt_violation:.3g}; returning the best iterate",
            RuntimeWarning,
            stacklevel=2,
        )
    return fit.model


def output_score(model: LinearModel, x: np.ndarray):
    """Signed margin distance (w.x + b) / ||w||; batched over leading axes."""
    norm = model.weight_norm
    if norm == 0.0:
        raise DegenerateModelError("zero weight vector has no margin geometry")
    x = np.asarray(x, dtype=float)
    scores = (x @ model.weights + model.bias) / norm
    return float(scores) if np.ndim(scores) == 0 else scores


def support_vector_value(model: LinearModel, x: np.ndarray, label):
    """Hinge argument 1 - c (w.x + b); non-negative iff the sample supports the margin."""
    x = np.asarray(x, dtype=float)
    values = 1.0 - np.asarray(label, dtype=float) * (x @ model.weights + model.bias)
    return float(values) if np.ndim(values) == 0 else values


def coding_matrix(class_count: int) -> np.ndarray:
    """One-versus-one coding matrix, one column per lexicographic class pair.

    Row c holds +1 where class c+1 is the positive side of the pair, -1 where
    it is the negative side and 0 where it does not participate.
    """
    if class_count < 2:
        raise ValueError(f"need at least 2 classes, got {class_count}")
    pairs = list(itertools.combinations(range(class_count), 2))
    matrix = np.zeros((class_count, len(pairs)))
    for col, (i, j) in enumerate(pairs):
        matrix[i, col] = 1.0
        matrix[j, col] = -1.0
    return matrix


@dataclass(frozen=True)
class MulticlassModel:
    """One binary separator per class pair plus the decoding matrix."""

    components: tuple[LinearModel, ...]
    matrix: np.ndarray
    class_pairs: tuple[tuple[int, int], ...]

    @property
    def class_count(self) -> int:
        return self.matrix.shape[0]


@dataclass
class MulticlassFit:
    """Trained pairwise separators plus per-pair solver state for warm restarts."""

    model: MulticlassModel
    pair_fits: dict[tuple[int, int], BinaryFit] = field(default_factory=dict)
    pair_sizes: dict[tuple[int, int], int] = field(default_factory=dict)


def fit_multiclass(
    features: np.ndarray,
    labels: np.ndarray,
    class_count: int,
    config: SvmConfig = SvmConfig(),
    warm: MulticlassFit | None = None,
) -> MulticlassFit:
    """Train all pairwise separators on labels in 1..class_count.

    Samples only ever get appended between calls, so a pair whose subset did
    not grow keeps its previous fit untouched and a grown pair warm-starts
    from its old dual variables.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels).ravel()
    if np.any((y < 1) | (y > class_count)):
        raise ValueError(f"labels must lie in 1..{class_count}")
    matrix = coding_matrix(class_count)
    pairs = tuple(itertools.combinations(range(1, class_count + 1), 2))
    fits: dict[tuple[int, int], BinaryFit] = {}
    sizes: dict[tuple[int, int], int] = {}
    for pair in pairs:
        pos, neg = pair
        idx = np.flatnonzero((y == pos) | (y == neg))
        sizes[pair] = len(idx)
        if warm is not None and warm.pair_sizes.get(pair) == len(idx):
            fits[pair] = warm.pair_fits[pair]
            continue
        if not (np.any(y[idx] == pos) and np.any(y[idx] == neg)):
            raise DegenerateTrainingError(f"classes {pos} and {neg} are not both present")
        signs = np.where(y[idx] == pos, 1.0, -1.0)
        alpha0 = None
        if warm is not None and pair in warm.pair_fits:
            alpha0 = warm.pair_fits[pair].alpha
        fits[pair] = fit_binary(X[idx], signs, config, alpha0=alpha0)
    components = tuple(fits[pair].model for pair in pairs)
    model = MulticlassModel(components, matrix, pairs)
    return MulticlassFit(model, fits, sizes)


def train_multiclass(
    features: np.ndarray,
    labels: np.ndarray,
    class_count: int,
    config: SvmConfig = SvmConfig(),
) -> MulticlassModel:
    return fit_multiclass(features, labels, class_count, config).model


def component_scores(model: MulticlassModel, x: np.ndarray) -> np.ndarray:
    """Margin distances of every pairwise separator, shape (..., pairs)."""
    x = np.asarray(x, dtype=float)
    W = np.stack([m.weights for m in model.components], axis=1)
    norms = np.array([m.weight_norm for m in model.components])
    if np.any(norms == 0.0):
        raise DegenerateModelError("a pairwise separator has a zero weight vector")
    biases = np.array([m.bias for m in model.components])
    return (x @ W + biases) / norms


def hamming_distances(matrix: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """Weighted Hamming distance of score vectors to each coding-matrix row.

    A separator the row does not use (entry 0) contributes nothing; a used
    separator contributes its |entry| when the score's sign disagrees, half
    that on an exactly zero score.
    """
    scores = np.asarray(scores, dtype=float)
    agreement = np.sign(scores[..., None, :] * matrix)
    return np.sum(np.abs(matrix) * (1.0 - agreement) / 2.0, axis=-1)


def predict_multiclass(model: MulticlassModel, x: np.ndarray):
    """Decode 1-based class labels; ties resolve to the smallest label."""
    distances = hamming_distances(model.matrix, component_scores(model, x))
    labels = np.argmin(distances, axis=-1) + 1
    return int(labels) if np.ndim(labels) == 0 else labels
