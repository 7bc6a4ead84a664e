import math

import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
# pytest --hypothesis-profile=stress for a deeper search
settings.register_profile("stress", deadline=None, max_examples=1000)
settings.load_profile("default")

S2 = 1 / math.sqrt(2)


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(12345)
