"""Dataset ingestion and shaping: IDX files, class subsets, device partitions.

The IDX byte layout (big-endian throughout):

    images                          labels
    offset  size  meaning          offset  size  meaning
    0       u32   magic 0x803      0       u32   magic 0x801
    4       u32   image count      4       u32   label count
    8       u32   rows             8..     u8    labels
    12      u32   columns
    16..    u8    pixels, row-major
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class IdxParseError(ValueError):
    """IDX file violates the format; message pins down the byte offset."""


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus labels.

    Multi-class labels are 1-based consecutive integers; binary pair subsets
    use {+1, -1}.  ``label_names`` maps internal codes back to the source
    classes (index i holds the name of class i+1, or of +1/-1 in that order
    for binary pairs).  Image features are scaled to [0, 1].
    """

    features: np.ndarray
    labels: np.ndarray
    class_count: int
    split: str = ""
    label_names: tuple = ()
    image_shape: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        if self.features.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {self.features.shape}")
        if len(self.features) != len(self.labels):
            raise ValueError(f"{len(self.features)} samples but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dimension(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        return replace(self, features=self.features[indices], labels=self.labels[indices])


def _read_header(data: bytes, path, magic: int, field_count: int) -> tuple:
    want = 4 * field_count
    if len(data) < want:
        raise IdxParseError(f"{path}: header truncated at offset {len(data)}, need {want} bytes")
    fields = struct.unpack(f">{field_count}I", data[:want])
    if fields[0] != magic:
        raise IdxParseError(f"{path}: bad magic 0x{fields[0]:08x} at offset 0, expected 0x{magic:08x}")
    return fields


def load_idx(images_path, labels_path, split: str = "") -> Dataset:
    """Parse an IDX image/label file pair into a 10-class dataset.

    Pixels are scaled by 1/255.  Labels 0..9 become 1..10 with
    ``label_names`` preserving the original digits.
    """
    images_path, labels_path = Path(images_path), Path(labels_path)
    raw = images_path.read_bytes()
    _, count, rows, cols = _read_header(raw, images_path, IMAGES_MAGIC, 4)
    expected = count * rows * cols
    payload = raw[16:]
    if len(payload) != expected:
        raise IdxParseError(
            f"{images_path}: expected {expected} pixel bytes at offset 16, found {len(payload)}"
        )
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows * cols)

    raw = labels_path.read_bytes()
    _, label_count = _read_header(raw, labels_path, LABELS_MAGIC, 2)
    payload = raw[8:]
    if len(payload) != label_count:
        raise IdxParseError(
            f"{labels_path}: expected {label_count} label bytes at offset 8, found {len(payload)}"
        )
    if label_count != count:
        raise IdxParseError(f"{labels_path}: {label_count} labels for {count} images")
    digits = np.frombuffer(payload, dtype=np.uint8)
    if digits.size and digits.max() > 9:
        raise IdxParseError(f"{labels_path}: label {digits.max()} outside 0..9")

    return Dataset(
        features=pixels.astype(float) / 255.0,
        labels=digits.astype(int) + 1,
        class_count=10,
        split=split,
        label_names=tuple(range(10)),
        image_shape=(rows, cols),
    )


def write_idx(dataset: Dataset, images_path, labels_path) -> None:
    """Inverse of :func:`load_idx` for round-trip tests; features re-quantized to bytes."""
    rows, cols = dataset.image_shape if dataset.image_shape else (1, dataset.dimension)
    pixels = np.clip(np.rint(dataset.features * 255.0), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGES_MAGIC, len(dataset), rows, cols))
        fh.write(pixels.tobytes())
    names = np.asarray(dataset.label_names if dataset.label_names else range(10))
    digits = names[np.asarray(dataset.labels) - 1].astype(np.uint8)
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", LABELS_MAGIC, len(dataset)))
        fh.write(digits.tobytes())


def load_digits_dataset() -> Dataset:
    """Bundled scikit-learn 8x8 handwritten digits, scaled to [0, 1]."""
    from sklearn.datasets import load_digits

    bunch = load_digits()
    return Dataset(
        features=bunch.data / 16.0,
        labels=bunch.target.astype(int) + 1,
        class_count=10,
        label_names=tuple(range(10)),
        image_shape=(8, 8),
    )


def _require_one_based(dataset: Dataset) -> None:
    if np.any(np.asarray(dataset.labels) < 1):
        raise ValueError("source dataset must use 1-based labels, not a +1/-1 pair subset")


def binary_subset(dataset: Dataset, positive, negative) -> Dataset:
    """Samples of two source classes, relabeled +1/-1; source order preserved."""
    _require_one_based(dataset)
    names = list(dataset.label_names)
    if positive not in names or negative not in names:
        raise ValueError(f"classes {positive!r}/{negative!r} not in {names}")
    pos_code, neg_code = names.index(positive) + 1, names.index(negative) + 1
    mask = (dataset.labels == pos_code) | (dataset.labels == neg_code)
    labels = np.where(dataset.labels[mask] == pos_code, 1, -1)
    return Dataset(
        features=dataset.features[mask],
        labels=labels,
        class_count=2,
        split=dataset.split,
        label_names=(positive, negative),
        image_shape=dataset.image_shape,
    )


def multiclass_subset(dataset: Dataset, classes) -> Dataset:
    """Samples of the given source classes, relabeled 1..len(classes) in the order given."""
    _require_one_based(dataset)
    names = list(dataset.label_names)
    classes = list(classes)
    if len(set(classes)) != len(classes) or len(classes) < 2:
        raise ValueError(f"need at least two distinct classes, got {classes}")
    missing = [c for c in classes if c not in names]
    if missing:
        raise ValueError(f"classes {missing} not in {names}")
    codes = np.array([names.index(c) + 1 for c in classes])
    mask = np.isin(dataset.labels, codes)
    remap = {code: rank + 1 for rank, code in enumerate(codes)}
    labels = np.array([remap[code] for code in dataset.labels[mask]])
    return Dataset(
        features=dataset.features[mask],
        labels=labels,
        class_count=len(classes),
        split=dataset.split,
        label_names=tuple(classes),
        image_shape=dataset.image_shape,
    )


def train_test_split(dataset: Dataset, test_fraction: float, rng: np.random.Generator):
    """Random split into (train, test); each side keeps the dataset metadata."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    order = rng.permutation(len(dataset))
    cut = int(round(test_fraction * len(dataset)))
    test = replace(dataset.subset(order[:cut]), split="test")
    train = replace(dataset.subset(order[cut:]), split="train")
    return train, test


def partition_devices(
    dataset: Dataset,
    device_count: int,
    rng: np.random.Generator,
    initial_per_class: int = 2,
):
    """Split a training set into an initial server seed and per-device shards.

    The seed takes ``initial_per_class`` random samples of every class; the
    remainder is permuted and split into ``device_count`` near-equal shards
    (sizes differ by at most one).
    """
    if device_count < 1:
        raise ValueError("need at least one device")
    classes = np.unique(dataset.labels)
    seed_idx = []
    for cls in classes:
        members = np.flatnonzero(dataset.labels == cls)
        if len(members) < initial_per_class:
            raise ValueError(f"class {cls} has only {len(members)} samples, need {initial_per_class}")
        seed_idx.extend(rng.choice(members, size=initial_per_class, replace=False))
    seed_idx = np.array(sorted(seed_idx))
    rest = np.setdiff1d(np.arange(len(dataset)), seed_idx)
    rest = rng.permutation(rest)
    shards = [dataset.subset(chunk) for chunk in np.array_split(rest, device_count)]
    return dataset.subset(seed_idx), shards


def augment_shifts(dataset: Dataset, copies: int, rng: np.random.Generator) -> Dataset:
    """Grow an image dataset with randomly shifted duplicates (zero fill).

    Every copy shifts each image by one pixel in an independently drawn axis
    direction.  Meant for desk-scale runs whose per-device streams would
    otherwise run dry; augment train splits only, never evaluation data.
    """
    if dataset.image_shape is None:
        raise ValueError("augmentation needs image-shaped features")
    if copies < 1:
        raise ValueError("copies must be at least 1")
    rows, cols = dataset.image_shape
    images = dataset.features.reshape(len(dataset), rows, cols)
    blocks = [dataset.features]
    labels = [dataset.labels]
    moves = [(0, 1), (0, -1), (1, 1), (1, -1)]
    for _ in range(copies):
        choice = rng.integers(len(moves), size=len(dataset))
        shifted = images.copy()
        for move, (axis, step) in enumerate(moves):
            selected = choice == move
            if not np.any(selected):
                continue
            rolled = np.roll(images[selected], step, axis=axis + 1)
            if axis == 0:
                rolled[:, 0 if step > 0 else -1, :] = 0.0
            else:
                rolled[:, :, 0 if step > 0 else -1] = 0.0
            shifted[selected] = rolled
        blocks.append(shifted.reshape(len(dataset), rows * cols))
        labels.append(dataset.labels)
    return replace(
        dataset,
        features=np.vstack(blocks),
        labels=np.concatenate(labels),
    )


def synthetic_gaussian(
    means,
    scale: float,
    counts,
    rng: np.random.Generator,
) -> Dataset:
    """Isotropic Gaussian blobs, one per row of ``means``; labels 1-based.

    A zero count yields no samples of that class, which is how degenerate
    single-class sets for trainer error tests are built.
    """
    means = np.atleast_2d(np.asarray(means, dtype=float))
    counts = list(counts)
    if len(counts) != len(means):
        raise ValueError(f"{len(means)} means but {len(counts)} counts")
    if not scale >= 0.0:
        raise ValueError(f"scale must be non-negative, got {scale}")
    blocks, labels = [], []
    for cls, (mean, count) in enumerate(zip(means, counts), start=1):
        blocks.append(mean + scale * rng.standard_normal((count, means.shape[1])))
        labels.append(np.full(count, cls))
    return Dataset(
        features=np.vstack(blocks) if blocks else np.empty((0, means.shape[1])),
        labels=np.concatenate(labels) if labels else np.empty(0, dtype=int),
        class_count=len(counts),
        label_names=tuple(range(1, len(counts) + 1)),
    )
