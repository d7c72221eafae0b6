"""Command line: ``syncloc {simulate,sweep,verify}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, config as cfgmod, output
from .estimator import MODES, normalize_mode
from .harness import (DEFAULT_GRIDS, MU_T, SIGMA_T, SWEEP_FIXED, SweepConfig,
                      filter_run, run_batch, run_rng, simulate_run, slope_checks, sweep)
from .world import CoverageGap

log = logging.getLogger("syncloc")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2

FIGURE_FILES = {MU_T: "fig5_data.csv", SIGMA_T: "fig6_data.csv"}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="syncloc", description=__doc__)
    p.add_argument("-V", "--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="TOML config file")
        sp.add_argument("--scenario", choices=("a", "b", "static"),
                        help="a: pedestrian, b: vehicle")
        sp.add_argument("--mode", choices=("one-an", "two-an"),
                        help="filter only this mode (default: both)")
        sp.add_argument("--mu-t", type=float, help="mean time-stamping delay, ns")
        sp.add_argument("--sigma-t", type=float,
                        help="time-stamping jitter, ns (receive jitter follows)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        sp.add_argument("--jobs", type=int, help="worker processes")
        sp.add_argument("-v", "--verbose", action="count", default=0)

    sim = sub.add_parser("simulate", help="one journey (or a batch) with traces")
    common(sim)
    sim.add_argument("--runs", type=int, help="journeys; above 1 only RMSEs are written")
    sim.add_argument("--noise-off", action="store_true", help="zero-noise oracle run")

    sw = sub.add_parser("sweep", help="RMSE curves over mu_T and/or sigma_T")
    common(sw)
    sw.add_argument("--runs", type=int, help="journeys per grid point (default 100)")
    sw.add_argument("--param", choices=(MU_T, SIGMA_T, "both"), default="both")

    ver = sub.add_parser("verify", help="fast numerical self-checks")
    ver.add_argument("--seed", type=int, default=2024)
    ver.add_argument("-v", "--verbose", action="count", default=0)
    return p


def _load(args) -> tuple:
    data = cfgmod.load_file(args.config) if args.config else {}
    base = cfgmod.experiment_from_dict(data)
    scen = base.scenario
    if args.scenario:
        scen = replace(scen, kind=args.scenario)
    delays = base.delays
    if args.mu_t is not None:
        delays = replace(delays, mu_t=args.mu_t)
    if args.sigma_t is not None:
        delays = replace(delays, sigma_t=args.sigma_t, sigma_r=args.sigma_t)
    base = replace(base, scenario=scen, delays=delays)
    if getattr(args, "noise_off", False):
        base = base.silenced()
    seed = args.seed if args.seed is not None else int(data.get("seed", 0))
    try:
        modes = (normalize_mode(args.mode or data["mode"]),) if args.mode or "mode" in data \
            else MODES
    except ValueError as exc:
        raise cfgmod.ConfigError(str(exc)) from None
    jobs = args.jobs if args.jobs is not None else int(data.get("jobs", 1))
    return data, base, seed, modes, jobs


def _meta(command, seed, **extra) -> dict:
    return {"command": command, "seed": seed, "version": __version__,
            **{k: cfgmod.to_dict(v) for k, v in extra.items()}}


def cmd_simulate(args) -> int:
    data, base, seed, modes, jobs = _load(args)
    runs = args.runs if args.runs is not None else int(data.get("runs", 1))
    if runs < 1:
        raise cfgmod.ConfigError("--runs must be at least 1")
    out = args.out
    meta = _meta("simulate", seed, runs=runs, modes=modes, experiment=base)

    if runs > 1:
        res = run_batch(base, runs, seed, modes, jobs)
        rows = [[m, r.pos_rmse, r.off_rmse, r.rounds, r.divergent_rounds, r.runs, r.failed_runs]
                for m, r in res.items()]
        output.write_csv(out / "summary.csv", ["mode", "pos_rmse_m", "off_rmse_ns", "rounds",
                                              "divergent_rounds", "runs", "failed_runs"], rows)
        output.write_json(out / "meta.json", meta)
        for m, r in res.items():
            print(f"{m}: position RMSE {r.pos_rmse:.4f} m, offset RMSE {r.off_rmse:.4f} ns, "
                  f"{r.divergent_rounds} divergent rounds, {r.failed_runs}/{runs} runs aborted")
        return EXIT_OK

    try:
        run = simulate_run(base, run_rng(seed, 0))
    except CoverageGap as exc:
        print(f"coverage gap, run aborted: {exc}", file=sys.stderr)
        return EXIT_FAIL
    output.write_trajectory(out / "trajectory.csv", run)
    output.write_timestamps(out / "timestamps.csv", run)
    for m in modes:
        tr = filter_run(run, base, m)
        output.write_trace(out / f"trace_{m}.csv", tr)
        keep = (tr.k > base.burn_in) & ~tr.failed
        pos = float(np.sqrt(np.mean(tr.pos_err[keep] ** 2))) if keep.any() else float("nan")
        off = float(np.sqrt(np.mean(tr.off_err[keep] ** 2))) if keep.any() else float("nan")
        print(f"{m}: {run.rounds} rounds, final position error {tr.pos_err[-1]:.3e} m, "
              f"final offset error {tr.off_err[-1]:.3e} ns, RMSE {pos:.4f} m / {off:.4f} ns, "
              f"{int(tr.failed.sum())} divergent rounds")
    output.write_json(out / "meta.json", meta)
    return EXIT_OK


def cmd_sweep(args) -> int:
    data, base, seed, modes, jobs = _load(args)
    runs = args.runs if args.runs is not None else int(data.get("runs", 100))
    params = (MU_T, SIGMA_T) if args.param == "both" else (args.param,)
    grids = cfgmod.sweep_grids(data)
    for param in params:
        point_base = base
        # each curve fixes the other delay parameter at its reference value
        # unless the command line or the config file sets it
        given = set(data.get("delays", {}))
        if param == MU_T and args.sigma_t is None and "sigma_t" not in given:
            v = SWEEP_FIXED[MU_T]
            point_base = replace(base, delays=replace(base.delays, sigma_t=v, sigma_r=v))
        if param == SIGMA_T and args.mu_t is None and "mu_t" not in given:
            point_base = replace(base, delays=replace(base.delays, mu_t=SWEEP_FIXED[SIGMA_T]))
        grid = grids.get(param, DEFAULT_GRIDS[param])
        sc = SweepConfig(param=param, grid=tuple(grid), base=point_base, modes=modes, runs=runs,
                         seed=seed, jobs=jobs)
        report = sweep(sc)
        output.write_sweep(args.out / FIGURE_FILES[param], report)
        output.write_json(args.out / (Path(FIGURE_FILES[param]).stem + "_meta.json"),
                          _meta("sweep", seed, sweep=sc))
        print(f"sweep over {param} ({runs} runs per point):")
        for c in slope_checks(report):
            print(f"  {c.label:34s} {c.value:+.4f}  target {c.target:28s} "
                  f"{'PASS' if c.ok else 'FAIL'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_checks

    results = run_checks(seed=args.seed)
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'}  {r.name}: {r.detail}")
    failed = [r.name for r in results if not r.ok]
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "verify": cmd_verify}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except cfgmod.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
