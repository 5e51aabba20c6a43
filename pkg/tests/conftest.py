import numpy as np
import pytest

from cavityef.model import ModelParams, make_grid

# coupling -> reference cavity frequency at resonance
REFERENCE = {0.1: 0.37676260, 0.5: 0.39495042, 0.9: 0.43442993}
# resonances located on the default grid (metric criterion), used where a
# test needs the sharp delocalization itself rather than the tabulated value
LOCATED = {0.1: 0.37678084, 0.5: 0.39498709, 0.9: 0.43448598}


@pytest.fixture
def defaults():
    return ModelParams()


@pytest.fixture
def small_grid_params():
    p = ModelParams(lambda_c=0.5, omega_c=REFERENCE[0.5])
    return p, make_grid(p, 61, 41)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
