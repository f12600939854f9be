import numpy as np
import pytest

from blockmark.keying import build_keyset
from blockmark.params import WatermarkParams
from blockmark.synth import synth_image

MASTER_KEY = bytes(range(32))


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture
def key():
    return MASTER_KEY


@pytest.fixture
def keyset():
    return build_keyset(MASTER_KEY)


@pytest.fixture
def params():
    return WatermarkParams()


@pytest.fixture
def small_params():
    # m=32, k=8, d=3: 16 coefficients per block, fast for unit tests.
    return WatermarkParams(block_size=32)


@pytest.fixture(scope="session")
def sample_images():
    rng = np.random.default_rng(99)
    return [
        synth_image(rng, 480, 672),
        synth_image(rng, 288, 384),
        synth_image(rng, 384, 480),
    ]
