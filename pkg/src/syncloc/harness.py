"""Monte Carlo driver: journeys, exchanges, filtering and RMSE statistics."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import kernels
from .aoa import N_ELEMENTS, sample_aoa_many
from .clocks import ClockParams, relative_params, sample_initial_clock
from .estimator import (MODES, ONE_AN, TWO_AN, NoiseConfig, init_state, normalize_mode,
                        table_q)
from .geometry import distance, true_aoa
from .protocol import DelayModel, exchange_readings
from .world import (CoverageGap, ScenarioConfig, World, advance_trajectory, build_world,
                    initial_state, make_journey, select_an_indices)

log = logging.getLogger(__name__)

EPOCH_RUN = "run"
EPOCH_ROUND = "round"


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one Monte Carlo point."""

    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    delays: DelayModel = field(default_factory=DelayModel)
    gnss_sigma_m: float = 2.0
    burn_in: int = 10
    #: "round": every exchange starts at reference time 0; "run": at k * period
    epoch: str = EPOCH_ROUND
    noise_off: bool = False

    def __post_init__(self):
        if self.epoch not in (EPOCH_RUN, EPOCH_ROUND):
            raise ValueError(f"epoch must be {EPOCH_RUN!r} or {EPOCH_ROUND!r}")
        if self.burn_in < 0:
            raise ValueError("burn-in must be non-negative")

    def filter_noise(self) -> NoiseConfig:
        d = self.delays
        q = table_q(self.scenario.acc_noise_std, self.scenario.delta_s)
        return NoiseConfig(sigma_t=d.sigma_t, sigma_r=d.sigma_r, sigma_jl=d.sigma_jl, q_diag=q)

    def silenced(self) -> "ExperimentConfig":
        """Same geometry with every noise source and delay bias removed.

        Only the simulated world goes quiet; the filter keeps its process
        noise, which it needs to follow turns and speed changes.
        """
        delays = DelayModel(mu_t=0.0, sigma_t=0.0, sigma_r=0.0, sigma_jl=0.0)
        return replace(self, delays=delays, noise_off=True)


@dataclass(frozen=True, eq=False)
class RunData:
    """Ground truth and raw measurements of one journey (mode independent)."""

    time_ns: np.ndarray
    truth: np.ndarray  # (K+1, 4): x, y, vx, vy; row 0 is the start
    serving: np.ndarray
    passive: np.ndarray
    readings: np.ndarray  # (K, 7)
    an_j: np.ndarray
    an_l: np.ndarray
    phi_j: np.ndarray
    var_j: np.ndarray
    phi_l: np.ndarray
    var_l: np.ndarray
    gnss: np.ndarray
    rel_skew: float
    rel_offset: float
    mn_clock: ClockParams
    an_clock: ClockParams

    @property
    def rounds(self) -> int:
        return self.readings.shape[0]


@dataclass(frozen=True, eq=False)
class Trace:
    """Per-round filter output against the truth for one run and mode."""

    mode: str
    k: np.ndarray
    time_ns: np.ndarray
    est: np.ndarray  # (K, 4): skew, offset, x, y
    truth_xy: np.ndarray
    truth_v: np.ndarray
    rel_skew: float
    rel_offset: float
    pos_err: np.ndarray
    off_err: np.ndarray
    flags: np.ndarray
    serving: np.ndarray
    passive: np.ndarray
    means: np.ndarray = field(repr=False)
    covs: np.ndarray = field(repr=False)

    @property
    def failed(self) -> np.ndarray:
        return (self.flags & kernels.FLAG_FAILED) != 0


@dataclass
class BatchResult:
    mode: str
    pos_rmse: float
    off_rmse: float
    rounds: int
    divergent_rounds: int
    runs: int
    failed_runs: int

    @property
    def divergent_fraction(self) -> float:
        total = self.rounds + self.divergent_rounds
        return self.divergent_rounds / total if total else 0.0


def run_rng(seed: int, run_index: int) -> np.random.Generator:
    """Random stream of one run; depends only on the master seed and run index."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(run_index)]))


def simulate_run(cfg: ExperimentConfig, rng: np.random.Generator,
                 world: Optional[World] = None) -> RunData:
    """Generate one journey with its exchanges and AoA observations.

    Sub-streams are split up front so that, for a fixed seed, changing the
    delay or noise levels leaves the route, clocks and standard-normal draws
    untouched.
    """
    scen = cfg.scenario
    world = world or build_world(scen)
    r_route, r_motion, r_clock, r_stamp, r_aoa, r_gnss = rng.spawn(6)
    noisy = not cfg.noise_off

    journey = make_journey(scen, r_route)
    state = initial_state(journey)
    states = [state]
    while not state.done:
        state = advance_trajectory(state, journey, scen, r_motion, noise=noisy)
        states.append(state)
    pos = np.array([s.position for s in states])
    vel = np.array([s.velocity for s in states])
    times = np.array([s.time for s in states])

    serving, passive = select_an_indices(pos[1:], world)
    if np.any(serving < 0):
        k = int(np.argmax(serving < 0)) + 1
        raise CoverageGap(f"round {k}: no AN in line of sight of {tuple(pos[k])}")

    mn_clock = sample_initial_clock(r_clock)
    an_clock = sample_initial_clock(r_clock)
    if cfg.noise_off:
        # unit master skew makes the footnote approximation exact
        an_clock = ClockParams(1.0, an_clock.offset)
    rel = relative_params(mn_clock, an_clock)

    mn_pos = pos[1:]
    an_j = world.an_pos[serving]
    has_l = passive >= 0
    an_l = np.where(has_l[:, None], world.an_pos[np.maximum(passive, 0)], np.nan)
    d_ij = distance(mn_pos, an_j)
    d_il = distance(mn_pos, an_l)
    k_idx = np.arange(1, len(pos))
    t_start = k_idx * scen.delta_ns if cfg.epoch == EPOCH_RUN else np.zeros(len(k_idx))
    readings = exchange_readings(t_start, d_ij, d_il, mn_clock, an_clock, an_clock, cfg.delays,
                                 r_stamp, noise=noisy)

    phi_true_j = true_aoa(mn_pos, an_j)
    phi_j, var_j = sample_aoa_many(phi_true_j, d_ij, world.an_axis[serving], r_aoa,
                                   n_elements=N_ELEMENTS, noiseless=not noisy)
    phi_l = np.full(len(k_idx), np.nan)
    var_l = np.full(len(k_idx), np.nan)
    if np.any(has_l):
        pl, vl = sample_aoa_many(true_aoa(mn_pos[has_l], an_l[has_l]), d_il[has_l],
                                 world.an_axis[passive[has_l]], r_aoa, n_elements=N_ELEMENTS,
                                 noiseless=not noisy)
        phi_l[has_l] = pl
        var_l[has_l] = vl

    gnss = pos[0] + (r_gnss.normal(0.0, cfg.gnss_sigma_m, 2) if noisy else 0.0)
    return RunData(time_ns=times, truth=np.hstack([pos, vel]), serving=serving, passive=passive,
                   readings=readings, an_j=np.ascontiguousarray(an_j),
                   an_l=np.ascontiguousarray(an_l), phi_j=phi_j, var_j=var_j, phi_l=phi_l,
                   var_l=var_l, gnss=gnss, rel_skew=rel.rel_skew, rel_offset=rel.rel_offset,
                   mn_clock=mn_clock, an_clock=an_clock)


def filter_run(data: RunData, cfg: ExperimentConfig, mode: str) -> Trace:
    """Run the recursion over a simulated journey in ``mode``."""
    mode = normalize_mode(mode)
    noise = cfg.filter_noise()
    gnss_sigma = cfg.gnss_sigma_m if cfg.gnss_sigma_m > 0 else 1.0
    prior = init_state(data.gnss, gnss_sigma)
    means, covs, flags, _ = kernels.run_filter(
        np.array(prior.mean), np.array(prior.cov), data.readings, data.an_j, data.an_l,
        data.phi_j, data.var_j, data.phi_l, data.var_l, mode == TWO_AN, cfg.scenario.delta_s,
        noise.q_diag, noise.var_t, noise.var_r, noise.var_jl)
    with np.errstate(divide="ignore", invalid="ignore"):
        skew = 1.0 / means[:, 0]
        offset = means[:, 1] / means[:, 0]
    est = np.column_stack([skew, offset, means[:, 2], means[:, 3]])
    truth_xy = data.truth[1:, :2]
    pos_err = np.hypot(*(est[:, 2:4] - truth_xy).T)
    off_err = np.abs(offset - data.rel_offset)
    return Trace(mode=mode, k=np.arange(1, data.rounds + 1), time_ns=data.time_ns[1:], est=est,
                 truth_xy=truth_xy, truth_v=data.truth[1:, 2:], rel_skew=data.rel_skew,
                 rel_offset=data.rel_offset, pos_err=pos_err, off_err=off_err, flags=flags,
                 serving=data.serving, passive=data.passive, means=means, covs=covs)


def run_single(cfg: ExperimentConfig, mode: str, seed: int, run_index: int = 0) -> Trace:
    """One full MN journey filtered in ``mode``."""
    data = simulate_run(cfg, run_rng(seed, run_index))
    return filter_run(data, cfg, mode)


def _run_job(args):
    cfg, modes, seed, run_index = args
    world = build_world(cfg.scenario)
    try:
        data = simulate_run(cfg, run_rng(seed, run_index), world)
    except CoverageGap as exc:
        log.warning("run %d aborted: %s", run_index, exc)
        return None
    out = {}
    for mode in modes:
        tr = filter_run(data, cfg, mode)
        keep = tr.k > cfg.burn_in
        bad = tr.failed & keep
        good = keep & ~tr.failed
        out[mode] = (float(np.sum(tr.pos_err[good] ** 2)), float(np.sum(tr.off_err[good] ** 2)),
                     int(good.sum()), int(bad.sum()))
    return out


def run_batch(cfg: ExperimentConfig, runs: int, seed: int, modes: Sequence[str] = MODES,
              jobs: int = 1) -> dict:
    """RMSE over all post-burn-in rounds of ``runs`` journeys, per mode.

    Rounds flagged as failed by the filter are excluded and counted.
    """
    if runs < 1:
        raise ValueError("runs must be at least 1")
    modes = [normalize_mode(m) for m in modes]
    tasks = [(cfg, modes, seed, i) for i in range(runs)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_run_job, tasks, chunksize=max(1, runs // (4 * jobs))))
    else:
        parts = [_run_job(t) for t in tasks]
    results = {}
    for mode in modes:
        sp = so = 0.0
        n = nbad = 0
        failed = 0
        for part in parts:
            if part is None:
                failed += 1
                continue
            a, b, c, d = part[mode]
            sp += a
            so += b
            n += c
            nbad += d
        pos = float(np.sqrt(sp / n)) if n else float("nan")
        off = float(np.sqrt(so / n)) if n else float("nan")
        results[mode] = BatchResult(mode, pos, off, n, nbad, runs, failed)
    return results


def fit_slope(x, y) -> float:
    """Ordinary least-squares slope of ``y`` on ``x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2:
        return float("nan")
    xc = x - x.mean()
    return float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))


# --- sweeps -------------------------------------------------------------------

MU_T = "mu_t"
SIGMA_T = "sigma_t"
SWEEP_PARAMS = (MU_T, SIGMA_T)
DEFAULT_GRIDS = {
    MU_T: (1.0, 3.0, 5.0, 7.0, 9.0, 11.0, 13.0, 15.0),
    SIGMA_T: (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0),
}
#: fixed value of the other delay parameter in each default sweep
SWEEP_FIXED = {MU_T: 0.2, SIGMA_T: 9.0}


@dataclass(frozen=True)
class SweepConfig:
    """One RMSE curve family: ``param`` swept over ``grid`` at fixed other settings.

    Sweeping ``sigma_t`` moves the receive jitter with it (sigma_R = sigma_T).
    """

    param: str = MU_T
    #: defaults to the standard grid of ``param``
    grid: Optional[tuple] = None
    base: ExperimentConfig = field(default_factory=ExperimentConfig)
    modes: tuple = MODES
    runs: int = 100
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if self.param not in SWEEP_PARAMS:
            raise ValueError(f"swept parameter must be one of {SWEEP_PARAMS}")
        grid = DEFAULT_GRIDS[self.param] if self.grid is None else self.grid
        grid = tuple(float(v) for v in grid)
        if not grid:
            raise ValueError("sweep grid is empty")
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "modes", tuple(normalize_mode(m) for m in self.modes))

    def point(self, value: float) -> ExperimentConfig:
        d = self.base.delays
        if self.param == MU_T:
            delays = replace(d, mu_t=value)
        else:
            delays = replace(d, sigma_t=value, sigma_r=value)
        return replace(self.base, delays=delays)


@dataclass
class RmseReport:
    param: str
    grid: tuple
    modes: tuple
    #: mode -> list of BatchResult, one per grid point
    points: dict

    def series(self, mode: str, what: str = "pos") -> np.ndarray:
        attr = "pos_rmse" if what == "pos" else "off_rmse"
        return np.array([getattr(b, attr) for b in self.points[normalize_mode(mode)]])

    def slope(self, mode: str, what: str = "pos") -> float:
        return fit_slope(self.grid, self.series(mode, what))

    def columns(self) -> list:
        cols = [self.param]
        for m in self.modes:
            cols += [f"pos_rmse_{m}", f"off_rmse_{m}", f"rounds_{m}", f"divergent_{m}",
                     f"failed_runs_{m}"]
        return cols

    def rows(self) -> list:
        out = []
        for i, v in enumerate(self.grid):
            row = [v]
            for m in self.modes:
                b = self.points[m][i]
                row += [b.pos_rmse, b.off_rmse, b.rounds, b.divergent_rounds, b.failed_runs]
            out.append(row)
        return out


def sweep(cfg: SweepConfig) -> RmseReport:
    """Run :func:`run_batch` at every grid point; runs share seeds across points."""
    points = {m: [] for m in cfg.modes}
    for value in cfg.grid:
        res = run_batch(cfg.point(value), cfg.runs, cfg.seed, cfg.modes, cfg.jobs)
        for m in cfg.modes:
            points[m].append(res[m])
        log.info("%s=%g: %s", cfg.param, value,
                 ", ".join(f"{m} {res[m].pos_rmse:.3f} m {res[m].off_rmse:.3f} ns"
                           for m in cfg.modes))
    return RmseReport(cfg.param, cfg.grid, cfg.modes, points)


class SlopeCheck(NamedTuple):
    label: str
    value: float
    ok: bool
    target: str


def slope_checks(report: RmseReport) -> list:
    """Fitted slopes of a standard sweep against the reference curves."""
    out = []
    modes = set(report.modes)
    if report.param == MU_T:
        if ONE_AN in modes:
            s = report.slope(ONE_AN)
            out.append(SlopeCheck("one_an position slope (m/ns)", s, abs(s - 0.28) <= 0.35 * 0.28,
                                  "0.28 +/- 35%"))
        if TWO_AN in modes:
            s = report.slope(TWO_AN)
            out.append(SlopeCheck("two_an position slope (m/ns)", s, abs(s) < 0.06, "|s| < 0.06"))
        for m in report.modes:
            s = report.slope(m, "off")
            out.append(SlopeCheck(f"{m} offset slope (ns/ns)", s, abs(s) < 0.05, "|s| < 0.05"))
    else:
        if TWO_AN in modes:
            s2 = report.slope(TWO_AN)
            out.append(SlopeCheck("two_an position slope (m/ns)", s2,
                                  abs(s2 - 0.15) <= 0.40 * 0.15, "0.15 +/- 40%"))
            if ONE_AN in modes:
                s1 = report.slope(ONE_AN)
                out.append(SlopeCheck("one_an position slope (m/ns)", s1,
                                      abs(s1) < 0.5 * abs(s2), "|s| < half the two_an slope"))
    return out
