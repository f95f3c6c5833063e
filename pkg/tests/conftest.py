import numpy as np
import pytest

from edgesched import binary_subset, load_digits_dataset, train_test_split


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def digits_pair():
    """3-vs-5 handwritten digits split once per session."""
    full = binary_subset(load_digits_dataset(), 3, 5)
    return train_test_split(full, 0.4, np.random.default_rng(7))
