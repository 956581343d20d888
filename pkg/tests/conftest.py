import pathlib

import numpy as np
import pytest

from copyforge import (DecisionConfig, FusionConfig, SyntheticEmbedder,
                       build_fuser, checkerboard, inverted)

GOLDEN_DIR = pathlib.Path(__file__).resolve().parent / "golden"


@pytest.fixture
def checker():
    return checkerboard(height=16, width=16, cell=2)


@pytest.fixture
def checker_inv(checker):
    return inverted(checker)


@pytest.fixture
def backend16():
    return SyntheticEmbedder(d=16, seed=0)


@pytest.fixture
def fuser32():
    return build_fuser(FusionConfig(d_model=32, num_heads=4, seed=0), input_dim=16)


@pytest.fixture
def default_config():
    return DecisionConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def golden_dir():
    return GOLDEN_DIR
