import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ecmimo import build_constellation, sample_channel, snr_to_sigma_w2, to_real_model, transmit


@pytest.fixture
def qpsk():
    return build_constellation(4, 1.0)


@pytest.fixture
def qam16():
    return build_constellation(16, 1.0)


def random_instance(rng, m=2, r=2, mod=4, es=1.0, snr_db=8.0):
    """A complex channel, its real model with observation, and the truth."""
    cst = build_constellation(mod, es)
    sigma_w2 = snr_to_sigma_w2(snr_db, m, mod, es)
    ch = sample_channel(m, r, sigma_w2, rng)
    real = to_real_model(ch)
    idx = rng.integers(mod, size=m)
    u = cst.points[idx]
    u_real = np.concatenate([u.real, u.imag])
    y = transmit(real, u_real, rng, cst)
    return ch, real.with_observation(y), cst, idx, u_real
