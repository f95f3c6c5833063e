"""Importance-aware wireless data acquisition for centralized edge learning."""

from .channel import (
    ChannelRealization,
    DegenerateChannelError,
    decode_noise,
    receive_snr,
    sample_fading,
    transmit_and_decode,
)
from .dataio import (
    Dataset,
    IdxParseError,
    augment_shifts,
    binary_subset,
    load_digits_dataset,
    load_idx,
    multiclass_subset,
    partition_devices,
    synthetic_gaussian,
    train_test_split,
    write_idx,
)
from .importance import (
    CompressionSpec,
    DiiKind,
    DiiValue,
    compress_model,
    dii_generic,
    dii_labeled,
    dii_multiclass,
    dii_unlabeled,
    distance_uncertainty,
    entropy_uncertainty,
    expected_received_distance_sq,
    labeled_update_probability,
    posterior_entropy,
    transmit_snr_weight,
)
from .probcls import (
    OptimizerConfig,
    SoftmaxClassifier,
    cross_entropy,
    fit_incremental,
    gradient,
    posterior,
    softmax,
)
from .scheduler import (
    DeviceReport,
    LimitAgreement,
    Policy,
    SchedulingInstance,
    random_instances,
    schedule,
    verify_snr_limits,
)
from .simkit import (
    CurveStats,
    RoundLog,
    SimConfig,
    Simulation,
    TrialResult,
    data_diversity_count,
    run_experiment,
)
from .svm import (
    BinaryFit,
    DegenerateModelError,
    DegenerateTrainingError,
    LinearModel,
    MulticlassModel,
    SvmConfig,
    coding_matrix,
    component_scores,
    fit_binary,
    fit_multiclass,
    hamming_distances,
    output_score,
    predict_multiclass,
    support_vector_value,
    train_binary,
    train_multiclass,
)

__version__ = "0.1.0"
