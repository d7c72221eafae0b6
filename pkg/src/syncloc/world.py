"""Manhattan street grid, AN deployment and MN journeys.

Streets are axis-aligned strips of width ``street_width_m`` centred on a
regular grid; two points are in LoS when the segment joining them stays
inside the union of the strips.  ANs sit on the curb, so the closest an MN
on the centreline gets to an AN is half a street width.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import distance, select_nearest_two, true_aoa, wrap_angle  # noqa: F401

PEDESTRIAN = "pedestrian"
VEHICLE = "vehicle"
STATIC = "static"
SCENARIO_ALIASES = {"a": PEDESTRIAN, "b": VEHICLE, PEDESTRIAN: PEDESTRIAN, VEHICLE: VEHICLE,
                    STATIC: STATIC}

MAX_SPEED = {PEDESTRIAN: 2.0, VEHICLE: 14.0, STATIC: 0.0}

# distances below this are treated as equal when ranking ANs
TIE_TOL_M = 1e-9

_HEADINGS = ((1, 0), (0, 1), (-1, 0), (0, -1))  # E, N, W, S


class CoverageGap(RuntimeError):
    """No AN is in line of sight of the MN."""


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str = PEDESTRIAN
    width_m: float = 400.0
    height_m: float = 300.0
    block_m: float = 100.0
    street_width_m: float = 10.0
    an_spacing_m: float = 50.0
    delta_s: float = 0.2
    acc_min: float = 1.0
    acc_max: float = 2.5
    acc_noise_std: float = 2.5
    max_edges: int = 10
    # static MN only
    static_position: tuple = (50.0, 0.0)
    static_duration_s: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "kind", SCENARIO_ALIASES.get(self.kind, self.kind))
        if self.kind not in MAX_SPEED:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.an_spacing_m <= 0:
            raise ValueError("AN spacing must be positive")
        if self.delta_s <= 0:
            raise ValueError("round period must be positive")
        if self.block_m <= 0 or self.street_width_m <= 0:
            raise ValueError("block size and street width must be positive")
        if not 0 < self.acc_min <= self.acc_max:
            raise ValueError("need 0 < acc_min <= acc_max")
        if self.acc_noise_std < 0:
            raise ValueError("acceleration noise std must be non-negative")

    @property
    def delta_ns(self) -> float:
        return self.delta_s * 1e9

    @property
    def max_speed(self) -> float:
        return MAX_SPEED[self.kind]


@dataclass(frozen=True)
class AccessNode:
    id: int
    position: tuple
    #: orientation of the ULA axis, radians
    axis_angle: float
    array_elements: int = 16

    def __post_init__(self):
        if self.array_elements < 2:
            raise ValueError("an AN array needs at least two elements")


@dataclass(frozen=True, eq=False)
class World:
    config: ScenarioConfig
    #: street strips as (n, 4) boxes: xmin, xmax, ymin, ymax
    streets: np.ndarray
    ans: tuple
    an_pos: np.ndarray = field(repr=False)
    an_axis: np.ndarray = field(repr=False)

    @property
    def x_lines(self) -> np.ndarray:
        return _grid_lines(self.config.width_m, self.config.block_m)

    @property
    def y_lines(self) -> np.ndarray:
        return _grid_lines(self.config.height_m, self.config.block_m)

    def on_street(self, p, tol=1e-9) -> bool:
        x, y = p
        s = self.streets
        return bool(np.any((s[:, 0] - tol <= x) & (x <= s[:, 1] + tol)
                           & (s[:, 2] - tol <= y) & (y <= s[:, 3] + tol)))


def _grid_lines(extent, block):
    n = int(np.floor(extent / block + 1e-9))
    return np.arange(n + 1) * block


def fence_posts(length: float, spacing: float) -> np.ndarray:
    """Offsets ``0, spacing, ...`` up to and including ``length``."""
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    n = int(np.floor(length / spacing + 1e-9))
    return np.arange(n + 1) * spacing


def build_world(config: ScenarioConfig) -> World:
    """Street strips plus curbside ANs every ``an_spacing_m`` along each street."""
    if config.an_spacing_m <= 0:
        raise ValueError("AN spacing must be positive")
    w = config.street_width_m
    half = 0.5 * w
    xs = _grid_lines(config.width_m, config.block_m)
    ys = _grid_lines(config.height_m, config.block_m)
    x_hi = xs[-1]
    y_hi = ys[-1]

    rects = [(-half, x_hi + half, y - half, y + half) for y in ys]
    rects += [(x - half, x + half, -half, y_hi + half) for x in xs]

    # Every AN sits half a street width north-east of its along-street point,
    # so no AN lies on a centreline and the MN never passes closer than ``half``.
    positions = []
    axes = []
    seen = set()

    def add(p, axis):
        key = (round(p[0], 9), round(p[1], 9))
        if key not in seen:
            seen.add(key)
            positions.append(p)
            axes.append(axis)

    # east-west streets: array axis north-south, broadside along the street
    for y in ys:
        for x in fence_posts(x_hi, config.an_spacing_m):
            add((float(x + half), float(y + half)), 0.5 * np.pi)
    # north-south streets: array axis east-west
    for x in xs:
        for y in fence_posts(y_hi, config.an_spacing_m):
            add((float(x + half), float(y + half)), 0.0)

    ans = tuple(AccessNode(id=i, position=p, axis_angle=float(a))
                for i, (p, a) in enumerate(zip(positions, axes)))
    an_pos = np.array(positions, dtype=float).reshape(-1, 2)
    an_axis = np.array(axes, dtype=float)
    streets = np.array(rects, dtype=float)
    for arr in (an_pos, an_axis, streets):
        arr.setflags(write=False)
    return World(config=config, streets=streets, ans=ans, an_pos=an_pos, an_axis=an_axis)


def select_an_indices(points, world: World):
    """Vectorised AN selection: (serving, passive) index arrays, -1 where absent."""
    pts = np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1, 2))
    return select_nearest_two(pts, np.ascontiguousarray(world.an_pos),
                              np.ascontiguousarray(world.streets), TIE_TOL_M)


def select_ans(mn_position, world: World, mode: str = "two_an"):
    """Serving AN (nearest in LoS) and, in two-AN mode, the passive one (second nearest).

    Raises :class:`CoverageGap` when no AN is in LoS.
    """
    first, second = select_an_indices(mn_position, world)
    if first[0] < 0:
        raise CoverageGap(f"no AN in line of sight of {tuple(mn_position)}")
    serving = world.ans[first[0]]
    passive = None
    if mode in ("two_an", "two-an") and second[0] >= 0:
        passive = world.ans[second[0]]
    return serving, passive


# --- journeys -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Journey:
    """A route along street centrelines plus a nominal speed profile.

    ``phases`` rows are (t_start, s_start, v_start, accel); the last phase is
    followed by the end of the journey at ``duration``.
    """

    kind: str
    waypoints: np.ndarray
    cum_length: np.ndarray
    phases: np.ndarray
    duration: float

    @property
    def length(self) -> float:
        return float(self.cum_length[-1])

    def nominal(self, t: float):
        """Nominal (arc length, speed) at journey time ``t`` seconds."""
        if t >= self.duration:
            t = self.duration
        i = int(np.searchsorted(self.phases[:, 0], t, side="right")) - 1
        i = max(i, 0)
        t0, s0, v0, acc = self.phases[i]
        tau = t - t0
        return min(s0 + v0 * tau + 0.5 * acc * tau * tau, self.length), v0 + acc * tau

    def point(self, s: float):
        """Position and unit tangent at arc length ``s``."""
        wp = self.waypoints
        if len(wp) < 2 or self.length == 0.0:
            return wp[0].copy(), np.array([1.0, 0.0])
        s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self.cum_length, s, side="right")) - 1
        i = min(max(i, 0), len(wp) - 2)
        seg = wp[i + 1] - wp[i]
        seg_len = self.cum_length[i + 1] - self.cum_length[i]
        tangent = seg / seg_len
        return wp[i] + tangent * (s - self.cum_length[i]), tangent


def random_route(config: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    """Grid walk entering from a random boundary node and turning at random.

    The MN never U-turns; it leaves the map when a chosen heading points
    outside the grid, or after ``max_edges`` edges.
    """
    nx = len(_grid_lines(config.width_m, config.block_m)) - 1
    ny = len(_grid_lines(config.height_m, config.block_m)) - 1
    side = int(rng.integers(4))
    if side == 0:  # enter from the west edge heading east
        node, heading = (0, int(rng.integers(ny + 1))), 0
    elif side == 1:
        node, heading = (int(rng.integers(nx + 1)), 0), 1
    elif side == 2:
        node, heading = (nx, int(rng.integers(ny + 1))), 2
    else:
        node, heading = (int(rng.integers(nx + 1)), ny), 3
    # a corner node on a degenerate side may have no inward edge along `heading`
    if not _inside(node, heading, nx, ny):
        heading = next(h for h in range(4) if _inside(node, h, nx, ny))

    nodes = [node]
    for _ in range(config.max_edges):
        dx, dy = _HEADINGS[heading]
        node = (node[0] + dx, node[1] + dy)
        nodes.append(node)
        # straight, left, right with equal probability
        heading = (heading + (0, 1, 3)[int(rng.integers(3))]) % 4
        if not _inside(node, heading, nx, ny):
            break
    return np.array(nodes, dtype=float) * config.block_m


def _inside(node, heading, nx, ny):
    dx, dy = _HEADINGS[heading]
    x, y = node[0] + dx, node[1] + dy
    return 0 <= x <= nx and 0 <= y <= ny


def make_journey(config: ScenarioConfig, rng: np.random.Generator) -> Journey:
    if config.kind == STATIC:
        wp = np.array([config.static_position], dtype=float)
        phases = np.array([[0.0, 0.0, 0.0, 0.0]])
        return Journey(config.kind, wp, np.array([0.0]), phases, float(config.static_duration_s))

    wp = random_route(config, rng)
    seg = np.hypot(*np.diff(wp, axis=0).T)
    cum = np.concatenate(([0.0], np.cumsum(seg)))
    vmax = config.max_speed
    if config.kind == PEDESTRIAN:
        phases = np.array([[0.0, 0.0, vmax, 0.0]])
        return Journey(config.kind, wp, cum, phases, float(cum[-1] / vmax))

    rows = []
    t = 0.0
    for e, length in enumerate(seg):
        last = e == len(seg) - 1
        a_up = rng.uniform(config.acc_min, config.acc_max)
        a_dn = rng.uniform(config.acc_min, config.acc_max)
        t = _edge_profile(rows, t, float(cum[e]), float(length), vmax, a_up, None if last else a_dn)
    return Journey(config.kind, wp, cum, np.array(rows), t)


def _edge_profile(rows, t, s0, length, vmax, a_up, a_dn):
    """Append accelerate/cruise/brake phases for one edge starting at rest."""
    d_up = vmax**2 / (2 * a_up)
    d_dn = 0.0 if a_dn is None else vmax**2 / (2 * a_dn)
    if d_up + d_dn <= length:
        v_peak = vmax
        cruise = (length - d_up - d_dn) / vmax
    elif a_dn is None:
        v_peak = np.sqrt(2 * a_up * length)
        cruise = 0.0
    else:
        v_peak = np.sqrt(2 * length * a_up * a_dn / (a_up + a_dn))
        cruise = 0.0
    t_up = v_peak / a_up
    rows.append((t, s0, 0.0, a_up))
    t += t_up
    s = s0 + 0.5 * a_up * t_up**2
    if cruise > 0.0:
        rows.append((t, s, v_peak, 0.0))
        t += cruise
        s += v_peak * cruise
    if a_dn is not None:
        t_dn = v_peak / a_dn
        rows.append((t, s, v_peak, -a_dn))
        t += t_dn
    return t


@dataclass(frozen=True)
class TrajectoryState:
    position: tuple
    velocity: tuple
    #: reference time, ns
    time: float
    arc: float = 0.0
    #: accumulated along-track perturbation, m
    drift: float = 0.0
    done: bool = False

    @property
    def speed(self) -> float:
        return float(np.hypot(*self.velocity))


def initial_state(journey: Journey) -> TrajectoryState:
    pos, tangent = journey.point(0.0)
    _, v = journey.nominal(0.0)
    return TrajectoryState(position=tuple(pos), velocity=tuple(v * tangent), time=0.0)


def advance_trajectory(state: TrajectoryState, journey: Journey, config: ScenarioConfig,
                       rng: np.random.Generator, noise: bool = True) -> TrajectoryState:
    """One round-period step along the journey.

    White acceleration noise perturbs the along-track motion only, which
    keeps the MN on the street centreline; the nominal speed profile is not
    disturbed.
    """
    dt = config.delta_s
    t_s = state.time * 1e-9 + dt
    acc = rng.normal(0.0, config.acc_noise_std) if noise and config.acc_noise_std > 0 else 0.0
    drift = state.drift + 0.5 * acc * dt * dt
    s_nom, v_nom = journey.nominal(t_s)
    arc = min(max(s_nom + drift, 0.0), journey.length)
    pos, tangent = journey.point(arc)
    vel = (v_nom + acc * dt) * tangent
    return TrajectoryState(position=tuple(pos), velocity=tuple(vel), time=t_s * 1e9, arc=arc,
                           drift=drift, done=t_s >= journey.duration - 1e-12)
