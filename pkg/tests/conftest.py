import math

import numpy as np
import pytest

from twomode.coupler import CouplerSettings


def random_settings(rng, with_phases=True, kl_range=(0.05, 3.0), dl_range=(-3.0, 3.0)):
    """Coupler settings with unit-scale section arguments."""
    length = rng.uniform(0.5e-3, 3e-3)
    kwargs = dict(
        kappa=rng.uniform(*kl_range) / length,
        length=length,
        wavelength=rng.uniform(400e-9, 1600e-9),
        delta=rng.uniform(*dl_range) / length,
    )
    if with_phases:
        kwargs.update(phi1=rng.uniform(-math.pi, math.pi), phi2=rng.uniform(-math.pi, math.pi))
    return CouplerSettings(**kwargs)


def aligned_max_diff(m1: np.ndarray, m2: np.ndarray) -> float:
    """Max elementwise difference after optimal global-phase alignment."""
    t = np.trace(m2.conj().T @ m1)
    phase = t / abs(t) if abs(t) > 0 else 1.0
    return float(np.max(np.abs(m1 - phase * m2)))


def noon_radial_phase(chi: float, p_values: np.ndarray) -> np.ndarray:
    """Continuous momentum-space phase of the two-photon path state along the
    radial line at angle chi, anchored to 0 at the origin.

    The state's momentum wavefunction is proportional to
    (4 p1^2 - 1) + i (4 p2^2 - 1) times a positive Gaussian, so the radial
    phase is the unwrapped arg of that complex number; even in the radius.
    """
    g = np.asarray(p_values, dtype=float)
    fine = np.linspace(0.0, max(np.max(np.abs(g)), 1.0), 4001)
    x = 4.0 * (fine * math.cos(chi)) ** 2 - 1.0
    y = 4.0 * (fine * math.sin(chi)) ** 2 - 1.0
    theta = np.unwrap(np.arctan2(y, x))
    theta -= theta[0]
    return np.interp(np.abs(g), fine, theta)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
