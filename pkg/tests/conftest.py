import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from intentrec.data import InteractionDataset, split_leave_one_out
from intentrec.encoder import EncoderConfig, init_params

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


TOY_SEQUENCES = [
    [1, 2, 3, 4, 5, 6],
    [2, 3, 4, 5, 1],
    [7, 8, 9, 10, 7, 8],
    [8, 9, 10, 7, 9],
    [1, 7, 2, 8, 3],
    [9, 4, 10, 5, 6, 1],
    [5, 6, 1, 2, 7, 8, 9],
    [10, 9, 8, 7, 6, 5],
]


def make_toy_dataset() -> InteractionDataset:
    return InteractionDataset(
        user_labels=[f"u{i}" for i in range(len(TOY_SEQUENCES))],
        sequences=[list(s) for s in TOY_SEQUENCES],
        vocab_size=10,
    )


@pytest.fixture
def toy_dataset() -> InteractionDataset:
    return make_toy_dataset()


@pytest.fixture
def toy_split():
    return split_leave_one_out(make_toy_dataset())


@pytest.fixture
def tiny_cfg() -> EncoderConfig:
    # 20 items plus pad and mask rows
    return EncoderConfig(
        vocab_size=22, max_seq_len=6, dim=8, blocks=1, heads=2, dropout=0.1
    )


@pytest.fixture
def tiny_params(tiny_cfg):
    return init_params(tiny_cfg, rng_seed=7)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
