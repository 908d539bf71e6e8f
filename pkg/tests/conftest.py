import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import mdbpe


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def bpe_example_grid():
    """The 1x12 two-class string used throughout: AAAAABBABABB (A=0, B=1)."""
    return mdbpe.from_classes(
        [1, 12], [0, 0, 0, 0, 0, 1, 1, 0, 1, 0, 1, 1], base_size=2
    )


@pytest.fixture
def bpe_example_trained(bpe_example_grid):
    return mdbpe.train(
        [bpe_example_grid], 2, mdbpe.TrainConfig(extra_tokens=3)
    )


def random_class_grid(rng, dims, n_classes):
    n = int(np.prod(dims))
    return mdbpe.from_classes(
        dims, rng.integers(0, n_classes, size=n), base_size=n_classes
    )
