import numpy as np
import pytest

import rollfusion as rf
from rollfusion.track import SpeedProfileLimits, speed_profile, stadium_track


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture(scope="session")
def stadium():
    track = stadium_track()
    profile = speed_profile(track, SpeedProfileLimits())
    return track, profile


@pytest.fixture(scope="session")
def lap_truth(stadium):
    """One noise-free coordinated lap on the standard stadium (k_rider = 0.1)."""
    track, profile = stadium
    return rf.generate_truth(track, profile, k_rider=0.1, dt=0.01, n_laps=1.0)


def fd_jacobian(f, x, h=1e-6):
    """Central finite-difference Jacobian, the oracle for analytic derivatives."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(f(x))
    J = np.zeros((f0.size, x.size))
    for j in range(x.size):
        dx = np.zeros_like(x)
        dx[j] = h
        J[:, j] = (np.asarray(f(x + dx)) - np.asarray(f(x - dx))) / (2 * h)
    return J
