"""Bayesian recursive filter for joint clock and position estimation.

The public functions wrap the array kernels in :mod:`syncloc.kernels` with
validated value types.  ``mean[0]`` is the inverse relative skew and
``mean[1]`` the relative offset divided by the skew, so that the master
time of an MN reading ``c`` is ``mean[0] * c - mean[1]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .aoa import AoaObservation
from .protocol import TimestampRecord
from .world import AccessNode

# Diffuse priors on the clock states and the velocity.
SKEW_PRIOR_VAR = 1e-4
OFFSET_PRIOR_VAR = 1e8  # ns^2
VELOCITY_PRIOR_VAR = 25.0  # (m/s)^2

#: Timing variances handed to the filter never drop below this (ns^2).
MIN_TIMING_VAR = 1e-6

ONE_AN = "one_an"
TWO_AN = "two_an"
MODES = (ONE_AN, TWO_AN)


class RankDeficientError(np.linalg.LinAlgError):
    def __init__(self, cond):
        super().__init__(f"correction system is rank deficient (condition estimate {cond:.3g})")
        self.cond = cond


class FilterDivergence(ArithmeticError):
    """The inverse-skew state left the positive half line."""


def normalize_mode(mode: str) -> str:
    mode = mode.replace("-", "_")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    return mode


def table_q(acc_noise_std=2.5, dt_s=0.2, skew_var=1e-12, offset_var=1e-2) -> np.ndarray:
    """Process noise diagonal: clock terms, then position and velocity per axis."""
    pos = (0.5 * acc_noise_std * dt_s) ** 2
    vel = acc_noise_std**2
    return np.array([skew_var, offset_var, pos, pos, vel, vel])


@dataclass(frozen=True)
class NoiseConfig:
    """Noise levels assumed by the filter."""

    sigma_t: float = 0.2
    sigma_r: float = 0.2
    sigma_jl: float = 1.0
    q_diag: np.ndarray = field(default_factory=table_q)

    def __post_init__(self):
        q = np.asarray(self.q_diag, dtype=float)
        if q.shape != (6,):
            raise ValueError("q_diag must have six entries")
        if min(self.sigma_t, self.sigma_r, self.sigma_jl) < 0 or np.any(q < 0):
            raise ValueError("noise parameters must be non-negative")
        object.__setattr__(self, "q_diag", q)

    @property
    def var_t(self) -> float:
        return max(self.sigma_t**2, MIN_TIMING_VAR)

    @property
    def var_r(self) -> float:
        return max(self.sigma_r**2, MIN_TIMING_VAR)

    @property
    def var_jl(self) -> float:
        return max(self.sigma_jl**2, MIN_TIMING_VAR)


@dataclass(frozen=True, eq=False)
class StateEstimate:
    mean: np.ndarray
    cov: np.ndarray
    k: int = 0
    flags: int = 0

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(6)
        cov = np.array(self.cov, dtype=float).reshape(6, 6)
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def position(self) -> np.ndarray:
        return self.mean[2:4]

    def is_valid(self, rtol=1e-9) -> bool:
        sym = np.abs(self.cov - self.cov.T).max() <= rtol * max(np.abs(self.cov).max(), 1e-300)
        return bool(sym and kernels.is_pd(np.ascontiguousarray(self.cov)))


@dataclass(frozen=True)
class TaylorCoefficients:
    a0: float
    a_x: float
    a_y: float
    b0: float
    b_x: float
    b_y: float


@dataclass(frozen=True, eq=False)
class LinearSystem:
    B: np.ndarray
    r: np.ndarray
    r_diag: np.ndarray

    @property
    def R(self) -> np.ndarray:
        return np.diag(self.r_diag)

    @property
    def rows(self) -> int:
        return self.B.shape[0]


@dataclass(frozen=True)
class MeasurementBundle:
    record: TimestampRecord
    an_j: AccessNode
    aoa_j: Optional[AoaObservation]
    an_l: Optional[AccessNode] = None
    aoa_l: Optional[AoaObservation] = None


@dataclass(frozen=True)
class FilterConfig:
    mode: str = TWO_AN
    dt_s: float = 0.2
    noise: NoiseConfig = field(default_factory=NoiseConfig)

    def __post_init__(self):
        object.__setattr__(self, "mode", normalize_mode(self.mode))


def init_state(gnss_position, position_sigma: float) -> StateEstimate:
    """Prior from a GNSS fix; the clock and velocity priors are diffuse."""
    x, y = gnss_position
    mean = np.array([1.0, 0.0, x, y, 0.0, 0.0])
    cov = np.diag([SKEW_PRIOR_VAR, OFFSET_PRIOR_VAR, position_sigma**2, position_sigma**2,
                   VELOCITY_PRIOR_VAR, VELOCITY_PRIOR_VAR])
    return StateEstimate(mean, cov, k=0)


def _require_pd(cov, what):
    if not kernels.is_pd(np.ascontiguousarray(cov)):
        raise ValueError(f"{what} covariance is not positive definite")


def predict(prev: StateEstimate, dt_s: float, q_diag) -> StateEstimate:
    """Constant-velocity propagation over ``dt_s`` seconds."""
    _require_pd(prev.cov, "previous")
    m, p = kernels.predict(np.array(prev.mean), np.array(prev.cov), float(dt_s),
                           np.asarray(q_diag, dtype=float))
    return StateEstimate(m, p, k=prev.k + 1)


def linearize(point, an_position) -> TaylorCoefficients:
    """First-order expansions of range/v_c and bearing about ``point``."""
    px, py = map(float, point)
    ax, ay = map(float, an_position)
    if px == ax and py == ay:
        raise ValueError("linearisation point coincides with the AN (singular gradient)")
    return TaylorCoefficients(*map(float, kernels.taylor(px, py, ax, ay)))


def _build(rec, aoa_j, aoa_l, pred, prev, an_j, an_l, dt_s, noise, two_an):
    lin = pred.position
    for an in (an_j, an_l) if two_an else (an_j,):
        if lin[0] == an.position[0] and lin[1] == an.position[1]:
            raise ValueError("linearisation point coincides with an AN (singular gradient)")
    nan2 = np.array([np.nan, np.nan])
    b, r, rd = kernels.build_system(
        rec.as_array(), aoa_j.angle, aoa_j.variance,
        aoa_l.angle if two_an else np.nan, aoa_l.variance if two_an else np.nan,
        np.asarray(an_j.position, dtype=float),
        np.asarray(an_l.position, dtype=float) if two_an else nan2,
        two_an, float(lin[0]), float(lin[1]), float(prev.mean[2]), float(prev.mean[3]),
        float(prev.cov[2, 2]), float(prev.cov[3, 3]), float(dt_s),
        noise.var_t, noise.var_r, noise.var_jl)
    return LinearSystem(b, r, rd)


def build_system_one_an(rec: TimestampRecord, aoa_j: AoaObservation, pred: StateEstimate,
                        prev: StateEstimate, an_j: AccessNode, dt_s: float,
                        noise: NoiseConfig) -> LinearSystem:
    """Six-row system from the serving AN's exchange, its AoA and the velocity pseudo-rows.

    ``pred`` supplies the linearisation point, ``prev`` the previous-round
    position and its marginal variances.
    """
    return _build(rec, aoa_j, None, pred, prev, an_j, None, dt_s, noise, False)


def build_system_two_an(rec: TimestampRecord, aoa_j: AoaObservation, aoa_l: AoaObservation,
                        pred: StateEstimate, prev: StateEstimate, an_j: AccessNode,
                        an_l: AccessNode, dt_s: float, noise: NoiseConfig) -> LinearSystem:
    """Seven-row system: the range row becomes the passive-minus-serving range difference."""
    if rec.c_l_t7 is None or not np.isfinite(rec.c_l_t7):
        raise ValueError("two-AN system needs the passive AN reading c_l(t7)")
    if aoa_l is None or an_l is None:
        raise ValueError("two-AN system needs the passive AN and its AoA")
    return _build(rec, aoa_j, aoa_l, pred, prev, an_j, an_l, dt_s, noise, True)


def correct(system: LinearSystem):
    """Least-squares correction ``(mu, Sigma)`` of a full-column-rank system."""
    mean, cov, ok, cond = kernels.correct(np.ascontiguousarray(system.B, dtype=float),
                                          np.asarray(system.r, dtype=float),
                                          np.asarray(system.r_diag, dtype=float))
    if not ok:
        raise RankDeficientError(cond)
    return mean, cov


def fuse(pred: StateEstimate, mu_corr, sigma_corr) -> StateEstimate:
    """Gaussian product of the prediction and the correction."""
    mean, cov, ok = kernels.fuse(np.array(pred.mean), np.array(pred.cov),
                                 np.asarray(mu_corr, dtype=float),
                                 np.ascontiguousarray(sigma_corr, dtype=float))
    if not ok:
        raise ValueError("fusion inputs must be positive definite")
    return StateEstimate(mean, cov, k=pred.k)


def extract_estimates(est: StateEstimate):
    """``(skew, offset_ns, x_m, y_m)`` of the MN relative to the master AN."""
    inv_skew = est.mean[0]
    if not inv_skew > 0:
        raise FilterDivergence(f"inverse skew state {inv_skew!r} is not positive")
    return 1.0 / inv_skew, est.mean[1] / inv_skew, est.mean[2], est.mean[3]


def step(state: StateEstimate, bundle: MeasurementBundle, config: FilterConfig) -> StateEstimate:
    """One full round; failures fall back to the prediction and set ``flags``."""
    if bundle.aoa_j is None:
        raise ValueError("measurement bundle has no AoA for the serving AN")
    two_an = config.mode == TWO_AN
    rec = bundle.record.as_array()
    if two_an and bundle.an_l is not None:
        if bundle.aoa_l is None:
            raise ValueError("measurement bundle has no AoA for the passive AN")
        an_l = np.asarray(bundle.an_l.position, dtype=float)
        phi_l, var_l = bundle.aoa_l.angle, bundle.aoa_l.variance
    else:
        an_l = np.array([np.nan, np.nan])
        phi_l = var_l = np.nan
    noise = config.noise
    mean, cov, flags, _ = kernels.filter_step(
        np.array(state.mean), np.array(state.cov), rec,
        np.asarray(bundle.an_j.position, dtype=float), an_l,
        bundle.aoa_j.angle, bundle.aoa_j.variance, phi_l, var_l, two_an, float(config.dt_s),
        noise.q_diag, noise.var_t, noise.var_r, noise.var_jl)
    return StateEstimate(mean, cov, k=state.k + 1, flags=int(flags))
