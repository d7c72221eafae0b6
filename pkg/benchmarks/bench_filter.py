"""Compare the numba kernels with the plain numpy fallback.

Each backend runs in its own interpreter because the switch is read at
import time.  Reports the filter recursion alone and a full Monte Carlo
batch, plus the largest difference between the two backends' estimates.

    python3 benchmarks/bench_filter.py --runs 20
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import tempfile

WORKER = r"""
import json, sys, time
import numpy as np
from syncloc import _accel
from syncloc.harness import ExperimentConfig, filter_run, run_batch, run_rng, simulate_run

runs, repeat, out = int(sys.argv[1]), int(sys.argv[2]), sys.argv[3]
cfg = ExperimentConfig()
data = simulate_run(cfg, run_rng(0, 0))
filter_run(data, cfg, "two_an")  # compile / warm up

t = time.perf_counter()
for _ in range(repeat):
    tr = filter_run(data, cfg, "two_an")
filt = (time.perf_counter() - t) / repeat

t = time.perf_counter()
run_batch(cfg, runs, seed=1)
batch = time.perf_counter() - t
np.save(out, tr.means)
print(json.dumps({"numba": _accel.NUMBA_ENABLED, "rounds": int(data.rounds),
                  "filter_s": filt, "batch_s": batch}))
"""


def run_backend(disable: bool, runs: int, repeat: int, out: str) -> dict:
    env = dict(os.environ, SYNCLOC_DISABLE_NUMBA="1" if disable else "0")
    res = subprocess.run([sys.executable, "-c", WORKER, str(runs), str(repeat), out], env=env,
                         check=True, capture_output=True, text=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--runs", type=int, default=20, help="journeys in the batch timing")
    p.add_argument("--repeat", type=int, default=3, help="filter passes to average")
    args = p.parse_args(argv)

    import numpy as np

    with tempfile.TemporaryDirectory() as tmp:
        fast = run_backend(False, args.runs, args.repeat, os.path.join(tmp, "nb.npy"))
        slow = run_backend(True, args.runs, args.repeat, os.path.join(tmp, "np.npy"))
        a = np.load(os.path.join(tmp, "nb.npy"))
        b = np.load(os.path.join(tmp, "np.npy"))
    diff = float(np.max(np.abs(a[:, 2:4] - b[:, 2:4])))

    print(f"{'backend':8s} {'filter ({} rounds)'.format(fast['rounds']):>22s} "
          f"{'batch ({} runs x 2 modes)'.format(args.runs):>28s}")
    for name, r in (("numba", fast), ("numpy", slow)):
        print(f"{name:8s} {r['filter_s'] * 1e3:19.1f} ms {r['batch_s']:26.2f} s")
    print(f"speed-up: filter x{slow['filter_s'] / fast['filter_s']:.1f}, "
          f"batch x{slow['batch_s'] / fast['batch_s']:.1f}")
    print(f"max position difference between backends: {diff:.2e} m")
    if not fast["numba"]:
        print("warning: numba was not active in the fast run", file=sys.stderr)


if __name__ == "__main__":
    main()
