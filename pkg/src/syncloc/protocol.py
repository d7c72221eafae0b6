"""Asymmetric time-stamp exchange between a serving AN, the MN and a passive AN.

One round, in reference time::

    AN j  t1 ----------- t3 ------------------------------ t6
             \\            \\                              /
    MN i      t2           t4 --(response delay)-- t5 ---+
                                                         \\
    AN l                                                   t7 (passive)

Every reading is the owner's clock at the owner's event; the passive AN
reading is further shifted by a fresh residual inter-AN offset draw.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .clocks import V_C, ClockParams, read_clock

#: Spacing between the two downlink messages, ns.
MSG_GAP_NS = 10e6
#: MN turnaround between the second downlink and its reply, ns.
RESPONSE_DELAY_NS = 10e6

READING_FIELDS = ("c_j_t1", "c_i_t2", "c_j_t3", "c_i_t4", "c_i_t5", "c_j_t6", "c_l_t7")


@dataclass(frozen=True)
class DelayModel:
    """Hardware time-stamping delays (ns); transmit and receive means are equal."""

    mu_t: float = 9.0
    sigma_t: float = 0.2
    sigma_r: float = 0.2
    sigma_jl: float = 1.0

    def __post_init__(self):
        if self.mu_t < 0 or self.sigma_t < 0 or self.sigma_r < 0 or self.sigma_jl < 0:
            raise ValueError("delay parameters must be non-negative")

    @property
    def mu_r(self) -> float:
        return self.mu_t


@dataclass(frozen=True)
class TimestampRecord:
    c_j_t1: float
    c_i_t2: float
    c_j_t3: float
    c_i_t4: float
    c_i_t5: float
    c_j_t6: float
    c_l_t7: Optional[float] = None
    k: int = 0
    serving_id: int = -1
    passive_id: int = -1

    def as_array(self) -> np.ndarray:
        """Seven readings; a missing passive reading is NaN."""
        c7 = np.nan if self.c_l_t7 is None else self.c_l_t7
        return np.array([self.c_j_t1, self.c_i_t2, self.c_j_t3, self.c_i_t4, self.c_i_t5,
                         self.c_j_t6, c7])

    @classmethod
    def from_array(cls, row, k=0, serving_id=-1, passive_id=-1) -> "TimestampRecord":
        row = [float(v) for v in row]
        c7 = None if len(row) < 7 or np.isnan(row[6]) else row[6]
        return cls(*row[:6], c_l_t7=c7, k=k, serving_id=serving_id, passive_id=passive_id)

    def csv_row(self) -> list:
        return [self.k, *[repr(float(v)) if v is not None else "" for v in
                          (self.c_j_t1, self.c_i_t2, self.c_j_t3, self.c_i_t4, self.c_i_t5,
                           self.c_j_t6, self.c_l_t7)], self.serving_id, self.passive_id]


CSV_HEADER = ["k", *READING_FIELDS, "serving_id", "passive_id"]


def exchange_readings(t_start, d_ij, d_il, mn: ClockParams, serving: ClockParams,
                      passive: Optional[ClockParams], delays: DelayModel, rng, noise=True):
    """Vectorised round generation over any number of rounds.

    ``t_start``, ``d_ij`` and ``d_il`` are broadcast to a common shape; returns
    an array ``(..., 7)`` of readings (NaN in the last column without a passive AN).
    Random draws are taken in a fixed order: T0, T1, R, R_il, theta_jl.
    """
    t_start, d_ij, d_il = np.broadcast_arrays(np.asarray(t_start, float),
                                              np.asarray(d_ij, float),
                                              np.asarray(d_il, float))
    if np.any(d_ij <= 0) or (passive is not None and np.any(d_il[np.isfinite(d_il)] <= 0)):
        raise ValueError("MN-AN distances must be positive")
    shape = d_ij.shape
    if noise:
        t0 = rng.normal(delays.mu_t, delays.sigma_t, shape)
        t1 = rng.normal(delays.mu_t, delays.sigma_t, shape)
        r = rng.normal(delays.mu_r, delays.sigma_r, shape)
        r_il = rng.normal(delays.mu_r, delays.sigma_r, shape)
        theta_jl = rng.normal(0.0, delays.sigma_jl, shape)
    else:
        t0 = t1 = r = r_il = np.full(shape, delays.mu_t)
        theta_jl = np.zeros(shape)

    tof_j = d_ij / V_C
    e1 = t_start
    e2 = e1 + tof_j + t0
    e3 = e1 + MSG_GAP_NS
    e4 = e3 + tof_j + t1
    e5 = e4 + RESPONSE_DELAY_NS
    e6 = e5 + tof_j + r

    out = np.empty(shape + (7,))
    out[..., 0] = read_clock(serving, e1)
    out[..., 1] = read_clock(mn, e2)
    out[..., 2] = read_clock(serving, e3)
    out[..., 3] = read_clock(mn, e4)
    out[..., 4] = read_clock(mn, e5)
    out[..., 5] = read_clock(serving, e6)
    if passive is None:
        out[..., 6] = np.nan
    else:
        e7 = e5 + d_il / V_C + r_il
        out[..., 6] = read_clock(passive, e7) - theta_jl
    return out


def run_exchange_round(mn: ClockParams, serving: ClockParams, passive: Optional[ClockParams],
                       d_ij: float, d_il: Optional[float], delays: DelayModel, rng,
                       t_start: float = 0.0, k: int = 0, noise: bool = True,
                       serving_id: int = -1, passive_id: int = -1) -> TimestampRecord:
    """Simulate one exchange round starting at reference time ``t_start`` (ns)."""
    if d_ij <= 0 or (passive is not None and (d_il is None or d_il <= 0)):
        raise ValueError("MN-AN distances must be positive")
    row = exchange_readings(t_start, d_ij, np.nan if d_il is None else d_il, mn, serving,
                            passive, delays, rng, noise=noise)
    return TimestampRecord.from_array(row, k=k, serving_id=serving_id,
                                      passive_id=passive_id if passive is not None else -1)


def validate_record(rec: TimestampRecord, two_an: bool = False) -> list:
    """Causality and completeness checks; an empty list means the record is usable."""
    problems = []
    values = rec.as_array()
    if not np.all(np.isfinite(values[:6])):
        problems.append("non-finite reading")
    if not rec.c_j_t3 > rec.c_j_t1:
        problems.append("ordering: c_j(t3) must exceed c_j(t1)")
    if not rec.c_i_t4 > rec.c_i_t2:
        problems.append("ordering: c_i(t4) must exceed c_i(t2)")
    if not rec.c_j_t6 > rec.c_j_t1:
        problems.append("ordering: c_j(t6) must exceed c_j(t1)")
    if not rec.c_i_t5 > rec.c_i_t4:
        problems.append("ordering: c_i(t5) must exceed c_i(t4)")
    if two_an:
        if rec.c_l_t7 is None or not np.isfinite(rec.c_l_t7):
            problems.append("missing field: c_l(t7) required in two-AN mode")
    return problems
