import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_batch(rng, n, d_in=5, dim=6, counts=(1, 4)):
    """Raw local matrices for n image/text pairs of varying sizes."""
    images = [rng.normal(size=(rng.integers(counts[0], counts[1] + 1), d_in)) for _ in range(n)]
    texts = [rng.normal(size=(rng.integers(counts[0], counts[1] + 1), d_in)) for _ in range(n)]
    return images, texts


def random_params(rng, d_in=5, dim=6):
    return {
        "weight_image": torch.as_tensor(rng.normal(size=(d_in, dim)), dtype=torch.float64),
        "bias_image": torch.as_tensor(0.1 * rng.normal(size=dim), dtype=torch.float64),
        "weight_text": torch.as_tensor(rng.normal(size=(d_in, dim)), dtype=torch.float64),
        "bias_text": torch.as_tensor(0.1 * rng.normal(size=dim), dtype=torch.float64),
    }
