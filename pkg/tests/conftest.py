import numpy as np
import pytest

from binaural_doa.hrtf import sphere_hrtf
from binaural_doa.timefreq import make_erb_bank, StftParams

FS = 48000


def ring_directions(step=2.0, frontal_only=False):
    """Horizontal-plane direction lattice; the frontal semicircle has one
    direction per lateral cone (no front/back pairs)."""
    if frontal_only:
        az = np.arange(-88.0, 90.0 + 1e-9, step) % 360.0
    else:
        az = np.arange(0.0, 360.0, step)
    return np.column_stack([az, np.zeros_like(az)])


def lattice_directions(step=10.0):
    az = np.arange(0.0, 360.0, step)
    el = np.arange(-80.0, 80.0 + 1e-9, step)
    aa, ee = np.meshgrid(az, el)
    return np.column_stack([aa.ravel(), ee.ravel()])


@pytest.fixture(scope="session")
def ring_set():
    return sphere_hrtf(0.0875, ring_directions(), FS)


@pytest.fixture(scope="session")
def frontal_ring_set():
    return sphere_hrtf(0.0875, ring_directions(frontal_only=True), FS)


@pytest.fixture(scope="session")
def lattice_set():
    return sphere_hrtf(0.0875, lattice_directions(), FS)


@pytest.fixture(scope="session")
def erb_bank():
    return make_erb_bank(60.0, 6000.0, 42, FS)


@pytest.fixture(scope="session")
def stft_params():
    return StftParams.create()
