"""Angle-of-arrival observations with CRB-shaped noise.

Angles are radians in the global frame, measured from AN to MN with a
four-quadrant arctangent.  The CRB angle is taken relative to the array
axis, so each AN carries the orientation of its ULA.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import wrap_angle

MAX_SNR_DB = 30.0
#: MN-AN distance at which the SNR peaks; closer distances are clamped.
MIN_DISTANCE_M = 5.0
N_ELEMENTS = 16
#: Lower clamp on sin^2 of the array angle (endfire guard).
SIN2_FLOOR = 1e-2


@dataclass(frozen=True)
class AoaObservation:
    angle: float
    variance: float
    an_id: int

    def __post_init__(self):
        if not (np.isfinite(self.variance) and self.variance > 0.0):
            raise ValueError(f"AoA variance must be positive and finite, got {self.variance!r}")


def snr_db(d):
    """Free-space SNR model: 30 dB at 5 m, falling 20 dB per decade."""
    d = np.maximum(d, MIN_DISTANCE_M)
    return MAX_SNR_DB - 20.0 * np.log10(d / MIN_DISTANCE_M)


def db_to_linear(x_db):
    return 10.0 ** (np.asarray(x_db) / 10.0)


def crb_variance(phi, n_elements, snr):
    """CRB on the AoA of an ``n_elements`` half-wavelength ULA.

    ``phi`` is measured from the array axis and ``snr`` is a linear power ratio.
    """
    n = n_elements
    if np.any(np.asarray(n) < 2):
        raise ValueError("a ULA needs at least two elements")
    if np.any(np.asarray(snr) <= 0):
        raise ValueError("SNR must be positive")
    sin2 = np.maximum(np.sin(phi) ** 2, SIN2_FLOOR)
    fisher = n * (n - 1) * (n + 1) * np.pi**2 * sin2 / 24.0 * snr
    return 1.0 / fisher


def aoa_variance(true_angle, d, axis_angle, n_elements=N_ELEMENTS):
    """Observation variance at global bearing ``true_angle`` and distance ``d``."""
    return crb_variance(true_angle - axis_angle, n_elements, db_to_linear(snr_db(d)))


def sample_aoa(true_angle, d, rng, *, axis_angle=0.0, n_elements=N_ELEMENTS, an_id=-1,
               noiseless=False) -> AoaObservation:
    """Draw one noisy AoA around the geometric bearing.

    ``noiseless`` keeps the reported variance but skips the draw.
    """
    var = float(aoa_variance(true_angle, d, axis_angle, n_elements))
    angle = true_angle if noiseless else true_angle + rng.normal(0.0, np.sqrt(var))
    return AoaObservation(angle=float(wrap_angle(angle)), variance=var, an_id=an_id)


def sample_aoa_many(true_angle, d, axis_angle, rng, *, n_elements=N_ELEMENTS, noiseless=False):
    """Vectorised :func:`sample_aoa`; returns ``(angles, variances)`` arrays."""
    var = aoa_variance(true_angle, d, axis_angle, n_elements)
    noise = 0.0 if noiseless else rng.normal(0.0, 1.0, size=np.shape(var)) * np.sqrt(var)
    return wrap_angle(true_angle + noise), var
