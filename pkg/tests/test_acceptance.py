"""Acceptance suite: one test per product guarantee, tolerances pinned.

Each test prints a single PASS/FAIL line (visible under ``pytest -s``);
``pytest -v`` shows the same verdicts as test outcomes.  The simulation
criteria (3, 7, 8, 9) rerun fixed-seed experiments and take several
minutes on one core; everything else finishes in seconds.
"""

import math
import warnings
from dataclasses import replace

import numpy as np
import pytest

from edgesched import (
    ChannelRealization,
    CompressionSpec,
    DeviceReport,
    LinearModel,
    Policy,
    SimConfig,
    Simulation,
    SoftmaxClassifier,
    augment_shifts,
    binary_subset,
    coding_matrix,
    component_scores,
    compress_model,
    cross_entropy,
    data_diversity_count,
    decode_noise,
    dii_unlabeled,
    expected_received_distance_sq,
    gradient,
    load_digits_dataset,
    multiclass_subset,
    output_score,
    predict_multiclass,
    random_instances,
    run_experiment,
    sample_fading,
    schedule,
    synthetic_gaussian,
    train_test_split,
    verify_snr_limits,
)
from test_svm import brute_force_decode, random_multiclass_model


def check(name, ok, detail):
    print(f"{name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{name}: {detail}"


def fixed_snr_channel(rng, snr):
    """A fading draw rescaled in power so the receive SNR is exactly ``snr``."""
    fade = sample_fading(rng)
    power = snr / (2.0 * abs(fade.gain) ** 2)
    return ChannelRealization(fade.gain, power, 1.0)


def mean_crossing(mean, target):
    hits = np.flatnonzero(mean >= target)
    return int(hits[0]) + 1 if len(hits) else None


def trial_crossings(per_trial, target, cap):
    rounds = np.full(per_trial.shape[0], float(cap))
    for i, curve in enumerate(per_trial):
        hits = np.flatnonzero(curve >= target)
        if len(hits):
            rounds[i] = hits[0] + 1
    return rounds


def digits_split(subset):
    return train_test_split(subset, 0.4, np.random.default_rng(7))


# -- frozen experiment fixtures ---------------------------------------------


@pytest.fixture(scope="module")
def binary_run():
    """3-vs-5 digits with shifted copies, 15 dB, budget 100, 50 paired trials.

    Returns the three policy curves plus an importance-aware rerun whose
    broadcast evaluation model keeps only half its weights.
    """
    train, test = digits_split(binary_subset(load_digits_dataset(), 3, 5))
    train = augment_shifts(train, copies=5, rng=np.random.default_rng(7))
    cfg = SimConfig(budget=100, seed=11, initial_per_class=1)
    policies = [Policy.IMPORTANCE_AWARE, Policy.CHANNEL_AWARE, Policy.DATA_AWARE]
    curves = run_experiment(cfg, train, test, trials=50, policies=policies)
    halved = run_experiment(
        replace(cfg, compression_ratio=0.5),
        train,
        test,
        trials=50,
        policies=[Policy.IMPORTANCE_AWARE],
    )
    return curves, halved[Policy.IMPORTANCE_AWARE]


@pytest.fixture(scope="module")
def labeled_run():
    """Plain 3-vs-5 digits at 10 dB, budget 100, 100 paired trials.

    The noisier channel keeps the learning curve in its rising phase long
    enough for rounds-to-target comparisons to be meaningful; local shards
    run dry late in the run, which is expected and harmless here.
    """
    train, test = digits_split(binary_subset(load_digits_dataset(), 3, 5))
    cfg = SimConfig(budget=100, seed=11, initial_per_class=1, transmit_power=10.0)
    policies = [
        Policy.LABELED_IMPORTANCE,
        Policy.IMPORTANCE_AWARE,
        Policy.CHANNEL_AWARE,
    ]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return run_experiment(cfg, train, test, trials=100, policies=policies)


@pytest.fixture(scope="module")
def multiclass_run():
    """Four digit classes with shifted copies, softmax learner, budget 300."""
    train, test = digits_split(multiclass_subset(load_digits_dataset(), (3, 5, 8, 9)))
    train = augment_shifts(train, copies=5, rng=np.random.default_rng(7))
    cfg = SimConfig(
        budget=300,
        seed=23,
        learner="logistic",
        policy=Policy.GENERIC_IMPORTANCE,
        retrain_stride=10,
        eval_stride=10,
    )
    policies = [Policy.GENERIC_IMPORTANCE, Policy.CHANNEL_AWARE]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return run_experiment(cfg, train, test, trials=20, policies=policies)


# -- criteria ----------------------------------------------------------------


def test_criterion_01_received_margin_statistics():
    """Mean squared received margin and projected-noise variance match closed forms."""
    rng = np.random.default_rng(20260814)
    draws = 400_000
    worst_mean = 0.0
    worst_var = 0.0
    for case in range(20):
        snr = (0.5, 2.0, 10.0)[case % 3]
        weights = rng.standard_normal(8)
        model = LinearModel(weights, float(rng.standard_normal() * 0.3))
        x = rng.standard_normal(8)
        ch = fixed_snr_channel(rng, snr)
        decoded = x + decode_noise(ch, (draws, 8), rng)
        scores = output_score(model, decoded)
        clean = output_score(model, x)

        expected = expected_received_distance_sq(model, x, snr)
        mean_err = abs(np.mean(scores**2) - expected) / expected
        var_err = abs(np.var(scores - clean) - 1.0 / snr) * snr
        worst_mean = max(worst_mean, mean_err)
        worst_var = max(worst_var, var_err)
    check(
        "criterion 1 (received-margin statistics)",
        worst_mean <= 0.01 and worst_var <= 0.02,
        f"worst relative errors: mean {worst_mean:.4f} (tol 0.01), "
        f"variance {worst_var:.4f} (tol 0.02)",
    )


def test_criterion_02_snr_limit_reductions():
    """The combined rule collapses onto each single-criterion rule at SNR extremes."""
    rng = np.random.default_rng(42)
    instances = random_instances(1000, 10, rng)
    low = verify_snr_limits(instances, 1e-9)
    high = verify_snr_limits(instances, 1e9)
    check(
        "criterion 2 (limit reductions)",
        low.channel_aware == 1.0 and high.data_aware == 1.0,
        f"channel agreement at low SNR {low.channel_aware:.3f}, "
        f"data agreement at high SNR {high.data_aware:.3f} (both must be 1.0)",
    )


def test_criterion_03_binary_policy_ordering(binary_run):
    """Importance-aware beats both baselines and needs far fewer rounds to 0.9."""
    curves, _ = binary_run
    imp = curves[Policy.IMPORTANCE_AWARE].mean
    ch = curves[Policy.CHANNEL_AWARE].mean
    da = curves[Policy.DATA_AWARE].mean
    to_imp = mean_crossing(imp, 0.9)
    to_ch = mean_crossing(ch, 0.9)
    ratio = to_imp / to_ch if to_imp and to_ch else math.inf
    check(
        "criterion 3 (binary policy ordering)",
        imp[-1] >= ch[-1] + 0.005 and imp[-1] >= da[-1] + 0.005 and ratio < 0.8,
        f"final margins over channel {100 * (imp[-1] - ch[-1]):.2f}pp / over data "
        f"{100 * (imp[-1] - da[-1]):.2f}pp (tol 0.5pp); rounds to 0.9: "
        f"{to_imp}/{to_ch} = {ratio:.2f} (bound 0.8)",
    )


def test_criterion_04_boundary_buffers_reduce_to_channel_rule():
    """With every candidate on the decision boundary the indicator is -1/SNR."""
    rng = np.random.default_rng(7)
    weights = rng.standard_normal(6)
    model = LinearModel(weights, float(rng.standard_normal()))

    def boundary_buffer(rows):
        X = rng.standard_normal((rows, 6))
        shift = (X @ model.weights + model.bias) / (model.weights @ model.weights)
        return X - np.outer(shift, model.weights)

    worst = 0.0
    agree = 0
    instances = 1000
    slot_rng = np.random.default_rng(8)
    for _ in range(instances):
        reports = []
        snrs = slot_rng.uniform(0.5, 50.0, size=10)
        while np.min(np.diff(np.sort(snrs))) < 1e-3:
            snrs = slot_rng.uniform(0.5, 50.0, size=10)
        for dev, snr in enumerate(snrs):
            value = dii_unlabeled(model, boundary_buffer(5), float(snr))
            worst = max(worst, abs(value.value + 1.0 / snr))
            reports.append(DeviceReport(dev, float(snr), value, 5))
        by_importance = schedule(reports, Policy.IMPORTANCE_AWARE)[0]
        by_channel = schedule(reports, Policy.CHANNEL_AWARE, slot_rng)[0]
        agree += by_importance == by_channel
    check(
        "criterion 4 (boundary buffers reduce to channel rule)",
        worst <= 1e-12 and agree == instances,
        f"max |indicator + 1/SNR| = {worst:.2e} (tol 1e-12); "
        f"device agreement {agree}/{instances}",
    )


def test_criterion_05_hamming_decode_oracle():
    """Fast decode equals the brute-force distance table; the 4-class code is fixed."""
    rng = np.random.default_rng(3)
    mismatches = 0
    for _ in range(100):
        classes = int(rng.integers(2, 6))
        model = random_multiclass_model(classes, 5, rng)
        x = rng.normal(size=5)
        scores = component_scores(model, x)
        if predict_multiclass(model, x) != brute_force_decode(model.matrix, scores):
            mismatches += 1
    expected_code = np.array(
        [
            [1, 1, 1, 0, 0, 0],
            [-1, 0, 0, 1, 1, 0],
            [0, -1, 0, -1, 0, 1],
            [0, 0, -1, 0, -1, -1],
        ],
        dtype=float,
    )
    code_ok = np.array_equal(coding_matrix(4), expected_code)
    check(
        "criterion 5 (decode oracle and 4-class code)",
        mismatches == 0 and code_ok,
        f"{mismatches}/100 decode mismatches; 4-class coding matrix fixed: {code_ok}",
    )


def test_criterion_06_data_diversity_audit():
    """Counting fresh samples during simulation reproduces the closed form exactly."""
    rng = np.random.default_rng(60)
    failures = []
    for trial in range(20):
        devices = int(rng.integers(2, 9))
        buffer_size = int(rng.integers(2, 7))
        refresh = int(rng.integers(0, 3))
        replaced = int(rng.integers(0, devices + 1))
        budget = int(rng.integers(1, 51))
        cfg = SimConfig(
            device_count=devices,
            buffer_size=buffer_size,
            refresh_per_slot=refresh,
            replaced_users_per_slot=replaced,
            budget=budget,
            policy=Policy.CHANNEL_AWARE,
            seed=trial,
            initial_per_class=1,
            retrain_stride=10,
            eval_stride=10,
        )
        per_class = devices * (buffer_size + 50 * (buffer_size + refresh))
        data_rng = np.random.default_rng(trial)

        def signed_blobs(count):
            data = synthetic_gaussian(
                means=((0.0, 0.0), (2.5, 2.5)),
                scale=0.6,
                counts=(count, count),
                rng=data_rng,
            )
            signed = np.where(data.labels == 1, 1, -1)
            return replace(data, labels=signed)

        train = signed_blobs(per_class)
        test = signed_blobs(20)
        result = Simulation(cfg, train, test).run()
        if result.exhausted or result.fresh_draws != data_diversity_count(cfg):
            failures.append((trial, result.fresh_draws, data_diversity_count(cfg)))
    check(
        "criterion 6 (data-diversity audit)",
        not failures,
        f"audit != formula on {failures}" if failures else "20/20 configs equal",
    )


def rounds_gap(fast, slow, target, cap):
    """Paired mean difference in per-trial rounds-to-target and its two-sigma tie band."""
    diff = trial_crossings(fast.per_trial, target, cap) - trial_crossings(
        slow.per_trial, target, cap
    )
    return diff.mean(), 2.0 * diff.std(ddof=1) / np.sqrt(len(diff))


def test_criterion_07_labeled_scheme_dominance(labeled_run):
    """Label-aware selection is never slower to any target; both schemes beat channel.

    Rounds-to-target is averaged over paired trials; a scheme counts as
    slower only beyond the two-sigma band of the paired difference (the
    schemes provably tie at saturation, where a zero-width comparison
    would flag noise).  Targets stop at 0.97, under every scheme's final
    plateau, so "reaches the target" is well defined.  Beating channel
    additionally requires being at least two rounds faster to some target
    and at least 1pp more accurate at some equal budget.
    """
    lab = labeled_run[Policy.LABELED_IMPORTANCE]
    imp = labeled_run[Policy.IMPORTANCE_AWARE]
    ch = labeled_run[Policy.CHANNEL_AWARE]
    cap = lab.per_trial.shape[1] + 1
    slower = []
    best_lab_lead = 0.0
    best_imp_lead = 0.0
    for target in np.arange(0.50, 0.9701, 0.005):
        gap, tie = rounds_gap(lab, imp, target, cap)
        if gap > tie:
            slower.append(("vs unlabeled", round(float(target), 3), round(gap, 2)))
        lab_gap, lab_tie = rounds_gap(lab, ch, target, cap)
        imp_gap, imp_tie = rounds_gap(imp, ch, target, cap)
        if lab_gap > lab_tie:
            slower.append(("labeled vs channel", round(float(target), 3), round(lab_gap, 2)))
        if imp_gap > imp_tie:
            slower.append(("unlabeled vs channel", round(float(target), 3), round(imp_gap, 2)))
        best_lab_lead = min(best_lab_lead, lab_gap)
        best_imp_lead = min(best_imp_lead, imp_gap)
    lab_acc_lead = float(np.max(lab.mean - ch.mean))
    imp_acc_lead = float(np.max(imp.mean - ch.mean))
    check(
        "criterion 7 (labeled scheme dominance)",
        not slower
        and best_lab_lead <= -2.0
        and best_imp_lead <= -2.0
        and lab_acc_lead >= 0.01
        and imp_acc_lead >= 0.01,
        f"statistically slower at: {slower or 'none'}; best leads over channel "
        f"{best_lab_lead:.1f}/{best_imp_lead:.1f} rounds (need <= -2), peak accuracy "
        f"margins {100 * lab_acc_lead:.1f}pp/{100 * imp_acc_lead:.1f}pp (need >= 1pp)",
    )


def test_criterion_08_compressed_evaluation_model(binary_run):
    """Half the weights in the broadcast model cost less than 1pp; counts are exact."""
    curves, halved = binary_run
    full = curves[Policy.IMPORTANCE_AWARE].mean[-1]
    half = halved.mean[-1]
    rng = np.random.default_rng(88)
    model = LinearModel(rng.standard_normal(64), 0.3)
    counts_ok = all(
        np.count_nonzero(compress_model(model, CompressionSpec(r)).weights)
        == math.ceil(r * 64)
        for r in (0.5, 0.1, 0.33, 1.0)
    )
    check(
        "criterion 8 (compressed evaluation model)",
        abs(full - half) <= 0.01 and counts_ok,
        f"|full - half| = {100 * abs(full - half):.2f}pp (tol 1pp); "
        f"kept-weight counts exact: {counts_ok}",
    )


def test_criterion_09_entropy_scheme_multiclass(multiclass_run):
    """Entropy-driven scheduling beats channel-aware on the 4-class task."""
    gen = multiclass_run[Policy.GENERIC_IMPORTANCE].mean
    ch = multiclass_run[Policy.CHANNEL_AWARE].mean
    margin = gen[-1] - ch[-1]
    check(
        "criterion 9 (entropy scheme, 4 classes)",
        margin >= 0.005,
        f"final margin over channel {100 * margin:.2f}pp (tol 0.5pp)",
    )


def test_criterion_10_gradient_check():
    """Analytic loss gradients match central differences on random coordinates."""
    rng = np.random.default_rng(10)
    worst = 0.0
    for hidden, activation in ((0, "tanh"), (16, "tanh"), (12, "relu")):
        model = SoftmaxClassifier(5, 3, hidden, activation=activation, rng=rng)
        params = rng.standard_normal(model.get_params().size) * 0.5
        model.set_params(params)
        X = rng.standard_normal((12, 5))
        labels = rng.integers(1, 4, size=12)
        flat = gradient(model, X, labels)
        probe = model.copy()
        for index in rng.choice(flat.size, size=min(25, flat.size), replace=False):
            step = 1e-6 * max(1.0, abs(params[index]))
            bumped = params.copy()
            bumped[index] += step
            probe.set_params(bumped)
            upper = cross_entropy(probe, X, labels)
            bumped[index] -= 2 * step
            probe.set_params(bumped)
            lower = cross_entropy(probe, X, labels)
            estimate = (upper - lower) / (2 * step)
            scale = max(abs(flat[index]), abs(estimate), 1e-8)
            worst = max(worst, abs(flat[index] - estimate) / scale)
    check(
        "criterion 10 (gradient check)",
        worst <= 1e-5,
        f"worst relative gradient error {worst:.2e} (tol 1e-5)",
    )
