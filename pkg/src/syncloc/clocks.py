"""Affine clock model and master-referenced clock parameters.

All times are in nanoseconds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: Speed of light in metres per nanosecond.
V_C = 0.299792458

#: Half-width of the initial offset distribution, ns.
INITIAL_OFFSET_RANGE_NS = 1000.0
#: Half-width of the skew distribution around 1 (100 ppm).
SKEW_RANGE = 1e-4


@dataclass(frozen=True)
class ClockParams:
    """Skew/offset pair of a free-running oscillator: ``c(t) = skew * t + offset``."""

    skew: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.skew) or self.skew <= 0.0:
            raise ValueError(f"clock skew must be positive and finite, got {self.skew!r}")
        if abs(self.skew - 1.0) > 1e-3:
            raise ValueError(f"clock skew {self.skew!r} outside 1 +/- 1000 ppm")
        if not np.isfinite(self.offset):
            raise ValueError(f"clock offset must be finite, got {self.offset!r}")


@dataclass(frozen=True)
class RelativeClock:
    """Clock of a node expressed against a master node's clock."""

    rel_skew: float
    rel_offset: float

    def __post_init__(self):
        if not self.rel_skew > 0.0:
            raise ValueError(f"relative skew must be positive, got {self.rel_skew!r}")

    def read(self, master_time):
        """Reading of the node's clock when the master clock shows ``master_time``."""
        return self.rel_skew * master_time + self.rel_offset


def read_clock(clock: ClockParams, t_ref):
    """Reading of ``clock`` at reference time ``t_ref`` (scalar or array)."""
    return clock.skew * t_ref + clock.offset


def relative_params(node: ClockParams, master: ClockParams) -> RelativeClock:
    """Skew and offset of ``node`` with ``master`` taken as the time reference."""
    if not master.skew > 0.0:
        raise ValueError("master skew must be positive")
    rel_skew = node.skew / master.skew
    return RelativeClock(rel_skew=rel_skew, rel_offset=node.offset - rel_skew * master.offset)


def sample_initial_clock(rng: np.random.Generator) -> ClockParams:
    offset = rng.uniform(-INITIAL_OFFSET_RANGE_NS, INITIAL_OFFSET_RANGE_NS)
    skew = rng.uniform(1.0 - SKEW_RANGE, 1.0 + SKEW_RANGE)
    return ClockParams(skew=skew, offset=offset)
