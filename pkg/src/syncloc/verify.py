"""Fast self-checks of the numerical core against independent oracles.

Each check returns ``(ok, detail)``; :func:`run_checks` runs them all.  The
kernels are looked up through the module at call time so that a patched
kernel is what gets checked.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from . import kernels
from .aoa import crb_variance, db_to_linear
from .harness import ExperimentConfig, filter_run, run_rng, simulate_run
from .world import STATIC, ScenarioConfig

V_C = kernels.V_C


class CheckResult(NamedTuple):
    name: str
    ok: bool
    detail: str


def _rel(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def random_spd(rng, n=6, spread=3.0):
    """Random SPD matrix with eigenvalues spread over ``10**±spread``."""
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    ev = 10.0 ** rng.uniform(-spread, spread, n)
    s = (q * ev) @ q.T
    return 0.5 * (s + s.T)


def taylor_fd(rng, n=20, h=1e-4):
    """Analytic range/bearing gradients against central differences."""
    worst = 0.0
    for _ in range(n):
        an = rng.uniform(-200, 200, 2)
        ang = rng.uniform(-np.pi, np.pi)
        p = an + rng.uniform(5, 150) * np.array([np.cos(ang), np.sin(ang)])
        t = kernels.taylor(p[0], p[1], an[0], an[1])
        if abs(_rel(t[0], np.hypot(*(p - an)) / V_C)) > 1e-12:
            return 1.0
        for col, (dx, dy) in ((1, (h, 0.0)), (2, (0.0, h))):
            fp = kernels.taylor(p[0] + dx, p[1] + dy, an[0], an[1])
            fm = kernels.taylor(p[0] - dx, p[1] - dy, an[0], an[1])
            g_range = (fp[0] - fm[0]) / (2 * h)
            g_bear = np.angle(np.exp(1j * (fp[3] - fm[3]))) / (2 * h)
            worst = max(worst, _rel(t[col], g_range), _rel(t[col + 3], g_bear))
    return worst


def check_taylor(rng):
    err = taylor_fd(rng)
    return err < 1e-5, f"max rel err {err:.2e} over 20 geometries"


def _sample_system(rng, two_an):
    """A realistic measurement system from a simulated round."""
    cfg = ExperimentConfig()
    data = simulate_run(cfg, rng)
    k = int(np.flatnonzero(np.isfinite(data.an_l[:, 0]))[data.rounds // 3])
    x, y = data.truth[k + 1, :2] + rng.normal(0, 1, 2)
    px, py = data.truth[k, :2]
    return kernels.build_system(data.readings[k], data.phi_j[k], data.var_j[k], data.phi_l[k],
                                data.var_l[k], data.an_j[k], data.an_l[k], two_an, x, y, px, py,
                                1.0, 1.0, 0.2, 0.04, 0.04, 1.0)


def check_correct(rng):
    worst_m = worst_c = 0.0
    for two_an in (False, True):
        b, r, rd = _sample_system(rng, two_an)
        mean, cov, ok, _ = kernels.correct(b, r, rd)
        if not ok:
            return False, "correction reported rank deficiency on a full-rank system"
        pinv = pinv_oracle(b)
        worst_m = max(worst_m, _rel(mean, pinv @ r))
        worst_c = max(worst_c, _rel(cov, pinv @ np.diag(rd) @ pinv.T))
    ok = worst_m < 1e-9 and worst_c < 1e-9
    return ok, f"mean rel err {worst_m:.2e}, cov rel err {worst_c:.2e}"


def pinv_oracle(b):
    """SVD pseudo-inverse of a full-column-rank ``b``.

    For full column rank, pinv(B) = S^-1 pinv(B S^-1) with S the column norms;
    the scaling only keeps the SVD away from its rcond cut-off.
    """
    s = np.sqrt((b * b).sum(axis=0))
    return np.linalg.pinv(b / s, rcond=1e-15) / s[:, None]


def fuse_info_form(mp, sp, mc, sc):
    ip = np.linalg.inv(sp)
    ic = np.linalg.inv(sc)
    cov = np.linalg.inv(ip + ic)
    return cov @ (ip @ mp + ic @ mc), cov


def check_fuse(rng, trials=20):
    worst = 0.0
    for _ in range(trials):
        sp, sc = random_spd(rng), random_spd(rng)
        mp, mc = rng.normal(size=6), rng.normal(size=6)
        m, s, ok = kernels.fuse(mp, sp, mc, sc)
        if not ok:
            return False, "fusion rejected positive definite inputs"
        m_ref, s_ref = fuse_info_form(mp, sp, mc, sc)
        worst = max(worst, _rel(m, m_ref), _rel(s, s_ref))
    return worst < 1e-8, f"max rel err {worst:.2e} over {trials} random pairs"


def covariance_health(covs, rtol=1e-9):
    """Number of covariances that are asymmetric or not positive definite."""
    bad = 0
    for c in covs:
        asym = np.abs(c - c.T).max() > rtol * np.abs(c).max()
        if asym or not kernels.is_pd(np.ascontiguousarray(c)):
            bad += 1
    return bad


def check_covariance(rng, steps=1000):
    total = 0
    for kind in ("a", "b"):
        cfg = ExperimentConfig(scenario=ScenarioConfig(kind=kind))
        covs = []
        i = 0
        while sum(len(c) for c in covs) < steps:
            data = simulate_run(cfg, run_rng(int(rng.integers(1 << 31)), i))
            covs.append(filter_run(data, cfg, "two_an").covs)
            i += 1
        allc = np.concatenate(covs)[:steps]
        total += covariance_health(allc)
    return total == 0, f"{total} bad covariances in {steps} steps per scenario"


def crb_direct(phi, n, snr_db):
    """Inverse Fisher information of a half-wavelength ULA, written out by hand."""
    snr = 10.0 ** (snr_db / 10.0)
    return 1.0 / (n * (n - 1) * (n + 1) * math.pi**2 * math.sin(phi) ** 2 / 24.0 * snr)


def check_crb(rng):
    got = crb_variance(np.pi / 2, 16, db_to_linear(30.0))
    ref = crb_direct(np.pi / 2, 16, 30.0)
    err = abs(got - ref) / ref
    return err < 1e-12, f"CRB {got:.6e} vs {ref:.6e} (rel err {err:.1e})"


def system_residuals(data, two_an):
    """Residual of ``B theta_true - r`` per round on noise-free data.

    Each row is scaled by the magnitude of its terms (at least 1), since the
    timestamp rows carry values up to ~1e10 ns.
    """
    theta_clock = np.array([1.0 / data.rel_skew, data.rel_offset / data.rel_skew])
    dt = 0.2
    out = np.empty(data.rounds)
    for k in range(data.rounds):
        x, y = data.truth[k + 1, :2]
        px, py = data.truth[k, :2]
        use_two = two_an and np.isfinite(data.an_l[k, 0])
        b, r, _ = kernels.build_system(data.readings[k], data.phi_j[k], data.var_j[k],
                                       data.phi_l[k], data.var_l[k], data.an_j[k], data.an_l[k],
                                       use_two, x, y, px, py, 1.0, 1.0, dt, 1e-6, 1e-6, 1e-6)
        theta = np.array([*theta_clock, x, y, (x - px) / dt, (y - py) / dt])
        scale = np.maximum(np.abs(b) @ np.abs(theta) + np.abs(r), 1.0)
        out[k] = float(np.max(np.abs(b @ theta - r) / scale))
    return out


def zero_noise_run(seed=0, kind=STATIC, mode="two_an"):
    cfg = ExperimentConfig(scenario=ScenarioConfig(kind=kind)).silenced()
    data = simulate_run(cfg, run_rng(seed, 0))
    return data, filter_run(data, cfg, mode)


def check_zero_noise(rng):
    details = []
    ok = True
    for mode in ("one_an", "two_an"):
        data, tr = zero_noise_run(int(rng.integers(1 << 31)), STATIC, mode)
        pos = float(tr.pos_err[9])
        off = float(tr.off_err[9])
        res = float(system_residuals(data, mode == "two_an").max())
        ok &= pos < 0.01 and off < 0.01 and res <= 1e-9
        details.append(f"{mode}: round 10 pos {pos:.1e} m, off {off:.1e} ns, residual {res:.1e}")
    return ok, "; ".join(details)


CHECKS: dict = {
    "taylor_finite_difference": check_taylor,
    "correction_pseudo_inverse": check_correct,
    "fusion_information_form": check_fuse,
    "covariance_spd_1000_steps": check_covariance,
    "aoa_crb_value": check_crb,
    "zero_noise_convergence": check_zero_noise,
}


def run_checks(seed: int = 2024, checks: dict = None) -> list:
    out = []
    for i, (name, fn) in enumerate((checks or CHECKS).items()):
        rng = np.random.default_rng([seed, i])
        try:
            ok, detail = fn(rng)
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, bool(ok), detail))
    return out

