"""CSV and JSON writers.

Floats are written with ``repr`` (shortest round-tripping decimal), rows in
a fixed order and without timestamps, so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .harness import RmseReport, RunData, Trace
from .protocol import CSV_HEADER

TRACE_HEADER = ["k", "time_ns", "skew_est", "offset_est_ns", "x_est", "y_est", "skew_true",
                "offset_true_ns", "x_true", "y_true", "vx_true", "vy_true", "pos_err_m",
                "off_err_ns", "flags", "serving_id", "passive_id"]
TIMESTAMP_HEADER = CSV_HEADER + ["phi_j", "var_phi_j", "phi_l", "var_phi_l"]
TRAJECTORY_HEADER = ["t_s", "x", "y", "vx", "vy"]


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    return repr(float(v))


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def trace_rows(tr: Trace):
    for i in range(len(tr.k)):
        yield [int(tr.k[i]), tr.time_ns[i], *tr.est[i], tr.rel_skew, tr.rel_offset,
               *tr.truth_xy[i], *tr.truth_v[i], tr.pos_err[i], tr.off_err[i], int(tr.flags[i]),
               int(tr.serving[i]), int(tr.passive[i])]


def write_trace(path, tr: Trace) -> Path:
    return write_csv(path, TRACE_HEADER, trace_rows(tr))


def write_timestamps(path, data: RunData) -> Path:
    rows = []
    for i in range(data.rounds):
        c = data.readings[i]
        c7 = None if np.isnan(c[6]) else c[6]
        rows.append([i + 1, *c[:6], c7, int(data.serving[i]), int(data.passive[i]),
                     data.phi_j[i], data.var_j[i], data.phi_l[i], data.var_l[i]])
    return write_csv(path, TIMESTAMP_HEADER, rows)


def write_trajectory(path, data: RunData) -> Path:
    rows = ([t * 1e-9, *s] for t, s in zip(data.time_ns, data.truth))
    return write_csv(path, TRAJECTORY_HEADER, rows)


def write_sweep(path, report: RmseReport) -> Path:
    return write_csv(path, report.columns(), report.rows())


def write_json(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path
