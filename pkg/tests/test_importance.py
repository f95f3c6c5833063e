import math

import numpy as np
import pytest

from edgesched import (
    CompressionSpec,
    DiiKind,
    LinearModel,
    SoftmaxClassifier,
    compress_model,
    dii_generic,
    dii_labeled,
    dii_multiclass,
    dii_unlabeled,
    distance_uncertainty,
    entropy_uncertainty,
    expected_received_distance_sq,
    labeled_update_probability,
    output_score,
    posterior_entropy,
    receive_snr,
    sample_fading,
    transmit_snr_weight,
)
from edgesched.importance import buffer_margin_scores
from tests.test_svm import random_multiclass_model


def test_distance_uncertainty_is_negative_squared_score():
    model = LinearModel(np.array([3.0, 4.0]), 0.0)
    x = np.array([5.0, 0.0])
    assert distance_uncertainty(model, x) == pytest.approx(-9.0)
    batch = distance_uncertainty(model, np.array([[5.0, 0.0], [0.0, 5.0]]))
    np.testing.assert_allclose(batch, [-9.0, -16.0])


def test_entropy_extremes():
    assert posterior_entropy(np.array([0.25, 0.25, 0.25, 0.25])) == pytest.approx(math.log(4.0))
    assert posterior_entropy(np.array([1.0, 0.0, 0.0])) == 0.0
    batch = posterior_entropy(np.array([[0.5, 0.5], [1.0, 0.0]]))
    np.testing.assert_allclose(batch, [math.log(2.0), 0.0])


def test_entropy_uncertainty_of_uniform_model(rng):
    model = SoftmaxClassifier(3, 5)
    values = entropy_uncertainty(model, rng.normal(size=(4, 3)))
    np.testing.assert_allclose(values, math.log(5.0))


def test_expected_received_distance_monte_carlo(rng):
    model = LinearModel(rng.normal(size=6), 0.3)
    x = rng.normal(size=6)
    snr = 2.5
    noise = rng.standard_normal((200_000, 6)) / math.sqrt(snr)
    empirical = np.mean(output_score(model, x + noise) ** 2)
    assert expected_received_distance_sq(model, x, snr) == pytest.approx(empirical, rel=0.02)


def test_dii_unlabeled_additive_decomposition():
    model = LinearModel(np.array([1.0, 0.0]), 0.0)
    buffer = np.array([[2.0, 0.0], [0.5, 1.0], [-3.0, 0.0]])
    value = dii_unlabeled(model, buffer, snr=4.0)
    assert value.kind is DiiKind.BINARY_MARGIN
    assert value.best_sample_index == 1
    assert value.value == pytest.approx(-0.25 - 0.25)
    assert value.kind.additive


def test_dii_unlabeled_boundary_collapses_to_channel_term(rng):
    w = rng.normal(size=8)
    model = LinearModel(w, -1.2)
    raw = rng.normal(size=(12, 8))
    # project every row onto the decision boundary w.x + b = 0
    buffer = raw - np.outer((raw @ w + model.bias) / (w @ w), w)
    for snr in (0.5, 3.0, 40.0):
        value = dii_unlabeled(model, buffer, snr)
        assert abs(value.value - (-1.0 / snr)) < 1e-12


def test_dii_multiclass_matches_manual_loop(rng):
    model = random_multiclass_model(4, 3, rng)
    buffer = rng.normal(size=(6, 3))
    snr = 2.0
    got = dii_multiclass(model, buffer, snr)
    from edgesched import component_scores, predict_multiclass

    best_value = -np.inf
    best_index = None
    for i, x in enumerate(buffer):
        scores = component_scores(model, x)
        decoded = predict_multiclass(model, x)
        total = 0.0
        for col in range(model.matrix.shape[1]):
            entry = model.matrix[decoded - 1, col]
            if entry != 0.0:
                total += abs(entry) * scores[col] ** 2
        uncertainty = -total / (model.class_count - 1)
        if uncertainty > best_value:
            best_value, best_index = uncertainty, i
    assert got.kind is DiiKind.MULTICLASS_MARGIN
    assert got.best_sample_index == best_index
    assert got.value == pytest.approx(-1.0 / snr + best_value)


def test_dii_generic_uses_entropy(rng):
    model = SoftmaxClassifier(2, 3)
    model.set_params(rng.normal(size=model.get_params().size))
    buffer = rng.normal(size=(5, 2))
    got = dii_generic(model, buffer, snr=5.0)
    entropies = entropy_uncertainty(model, buffer)
    assert got.kind is DiiKind.POSTERIOR_ENTROPY
    assert got.best_sample_index == int(np.argmax(entropies))
    assert got.value == pytest.approx(-0.2 + entropies.max())


def test_dii_labeled_scales_with_snr():
    model = LinearModel(np.array([1.0, 0.0]), 0.0)
    buffer = np.array([[0.5, 0.0], [2.0, 0.0], [-0.5, 0.0]])
    labels = np.array([1, 1, 1])
    got = dii_labeled(model, buffer, labels, snr=9.0)
    # hinge arguments: 0.5, -1 -> clamped 0, 1.5; scaled by sqrt(9)
    assert got.kind is DiiKind.LABELED_MARGIN
    assert not got.kind.additive
    assert got.best_sample_index == 2
    assert got.value == pytest.approx(3.0 * 1.5)


def test_dii_rejects_bad_snr():
    model = LinearModel(np.ones(2), 0.0)
    with pytest.raises(ValueError):
        dii_unlabeled(model, np.ones((1, 2)), snr=0.0)


def test_labeled_update_probability_monte_carlo(rng):
    model = LinearModel(rng.normal(size=5), 0.2)
    x = rng.normal(size=5)
    label = 1 if 1.0 - (x @ model.weights + model.bias) >= 0.0 else -1
    snr = 3.0
    p = labeled_update_probability(model, x, label, snr)
    noise = rng.standard_normal((400_000, 5)) / math.sqrt(snr)
    noisy_values = 1.0 - label * ((x + noise) @ model.weights + model.bias)
    empirical = np.mean(noisy_values >= 0.0)
    assert p == pytest.approx(empirical, abs=0.004)


def test_labeled_update_probability_edge_cases():
    model = LinearModel(np.array([2.0, 0.0]), 0.0)
    # sample exactly on the margin: coin flip
    on_margin = np.array([0.5, 0.0])
    assert labeled_update_probability(model, on_margin, 1, snr=7.0) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        labeled_update_probability(model, np.array([5.0, 0.0]), 1, snr=7.0)


def test_transmit_snr_weight_matches_receive_snr(rng):
    ch = sample_fading(rng, transmit_power=3.0, noise_variance=0.7)
    weight = transmit_snr_weight(ch.transmit_power, ch.noise_variance, ch.gain)
    assert weight == pytest.approx(-1.0 / receive_snr(ch))


def test_buffer_scores_sparse_path_matches_dense(rng):
    w = rng.normal(size=10)
    w[np.abs(w) < 0.7] = 0.0
    model = LinearModel(w, 0.4)
    X = rng.normal(size=(8, 10))
    np.testing.assert_allclose(
        buffer_margin_scores(model, X), (X @ w + 0.4) / np.linalg.norm(w), atol=1e-12
    )


def test_compress_linear_counts_and_magnitudes():
    model = LinearModel(np.array([3.0, -1.0, 2.0, 0.5]), 9.0)
    half = compress_model(model, CompressionSpec(0.5))
    np.testing.assert_array_equal(half.weights, [3.0, 0.0, 2.0, 0.0])
    assert half.bias == 9.0
    # ceil rounds the kept count up
    third = compress_model(model, CompressionSpec(0.3))
    assert np.count_nonzero(third.weights) == 2


def test_compress_tie_break_is_stable():
    model = LinearModel(np.array([1.0, -1.0, 1.0, 1.0]), 0.0)
    kept = compress_model(model, CompressionSpec(0.5)).weights
    np.testing.assert_array_equal(kept, [1.0, -1.0, 0.0, 0.0])


@pytest.mark.parametrize("ratio", [0.1, 0.33, 0.5, 0.9])
def test_compress_softmax_exact_count(rng, ratio):
    model = SoftmaxClassifier(6, 4, hidden_units=5, rng=rng)
    pruned = compress_model(model, CompressionSpec(ratio))
    kept = sum(np.count_nonzero(W) for W, _ in pruned.layers)
    assert kept == math.ceil(ratio * model.weight_count)
    for (_, b_pruned), (_, b_full) in zip(pruned.layers, model.layers):
        np.testing.assert_array_equal(b_pruned, b_full)


def test_compress_full_ratio_is_identity():
    model = LinearModel(np.array([1.0, 2.0]), 0.0)
    assert compress_model(model, CompressionSpec(1.0)) is model


def test_compress_multiclass_per_component(rng):
    model = random_multiclass_model(3, 8, rng)
    pruned = compress_model(model, CompressionSpec(0.25))
    for component in pruned.components:
        assert np.count_nonzero(component.weights) == 2


def test_compression_spec_validation():
    with pytest.raises(ValueError):
        CompressionSpec(0.0)
    with pytest.raises(ValueError):
        CompressionSpec(1.5)
