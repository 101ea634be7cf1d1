import warnings

import numpy as np
import pytest

from sudormrf.config import ModelConfig

warnings.filterwarnings("ignore", message=r".*httpx2.*")


def tiny_config(variant: str = "causal_plusplus", **overrides) -> ModelConfig:
    """Small but structurally complete config for fast functional tests."""
    base = dict(variant=variant, n_sources=2, enc_channels=16,
                block_channels=8, hidden_channels=16, dw_kernel=5,
                resampling_depth=2, num_blocks=2, gc_groups=4)
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
