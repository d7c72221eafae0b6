"""Filter kernels on plain float64 arrays.

State layout: ``[1/skew, offset/skew (ns), x (m), y (m), vx (m/s), vy (m/s)]``.
Everything here compiles under numba nopython mode; with numba disabled the
same code runs as ordinary numpy.
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import njit

V_C = 0.299792458  # m/ns
N_STATE = 6

FLAG_RANK = 1  # correction system rank deficient: prediction kept
FLAG_FUSE = 2  # fusion input not positive definite: prediction kept
FLAG_DIVERGED = 4  # non-positive or non-finite 1/skew: prediction kept
FLAG_NO_PASSIVE = 8  # two-AN round without a passive AN: one-AN system used
FLAG_FAILED = FLAG_RANK | FLAG_FUSE | FLAG_DIVERGED

RANK_RCOND = 1e-12
#: Correction passes per round; each later pass re-linearises at the previous
#: fused position, stopping once it moves less than RELIN_TOL_M.
RELIN_ITERS = 5
RELIN_TOL_M = 1e-6


@njit
def wrap(x):
    return x - 2.0 * math.pi * math.ceil((x - math.pi) / (2.0 * math.pi))


@njit
def transition(dt_s):
    a = np.eye(N_STATE)
    a[2, 4] = dt_s
    a[3, 5] = dt_s
    return a


@njit
def predict(mean, cov, dt_s, q_diag):
    a = transition(dt_s)
    m = a @ mean
    p = a @ cov @ a.T
    for i in range(N_STATE):
        p[i, i] += q_diag[i]
    return m, 0.5 * (p + p.T)


@njit
def taylor(px, py, ax, ay):
    """Range (ns) and bearing (rad) expansions about ``(px, py)`` for an AN at ``(ax, ay)``.

    Returns ``[a0, a_x, a_y, b0, b_x, b_y]``.
    """
    dx = px - ax
    dy = py - ay
    a0 = math.sqrt(dx * dx + dy * dy) / V_C
    out = np.empty(6)
    out[0] = a0
    out[1] = dx / (V_C * V_C * a0)
    out[2] = dy / (V_C * V_C * a0)
    out[3] = math.atan2(dy, dx)
    out[4] = -dy / (V_C * V_C * a0 * a0)
    out[5] = dx / (V_C * V_C * a0 * a0)
    return out


@njit
def build_system(rec, phi_j, var_phi_j, phi_l, var_phi_l, an_j, an_l, two_an, lin_x, lin_y,
                 prev_x, prev_y, prev_var_x, prev_var_y, dt_s, var_t, var_r, var_jl):
    """Linearised measurement system ``B theta = r`` with diagonal noise ``R``.

    ``rec`` holds the seven readings c_j(t1), c_i(t2), c_j(t3), c_i(t4),
    c_i(t5), c_j(t6), c_l(t7).
    """
    m = 7 if two_an else 6
    b = np.zeros((m, N_STATE))
    r = np.zeros(m)
    rd = np.zeros(m)
    c1, c2, c3, c4, c5, c6, c7 = rec[0], rec[1], rec[2], rec[3], rec[4], rec[5], rec[6]
    tj = taylor(lin_x, lin_y, an_j[0], an_j[1])
    tl = taylor(lin_x, lin_y, an_l[0], an_l[1]) if two_an else tj

    # skew from the two downlink messages
    b[0, 0] = c4 - c2
    r[0] = c3 - c1
    rd[0] = 2.0 * var_t
    # offset from the second downlink plus the uplink
    b[1, 0] = c4 + c5
    b[1, 1] = -2.0
    r[1] = c3 + c6
    rd[1] = var_t + var_r

    row = 2
    if two_an:
        gx = tl[1] - tj[1]
        gy = tl[2] - tj[2]
        b[row, 2] = gx
        b[row, 3] = gy
        r[row] = c7 - c6 - (tl[0] - tj[0]) + gx * lin_x + gy * lin_y
        rd[row] = 2.0 * var_r + var_jl
    else:
        b[row, 0] = c5
        b[row, 1] = -1.0
        b[row, 2] = tj[1]
        b[row, 3] = tj[2]
        r[row] = c6 - tj[0] + tj[1] * lin_x + tj[2] * lin_y
        rd[row] = var_r
    row += 1

    b[row, 2] = tj[4]
    b[row, 3] = tj[5]
    r[row] = wrap(phi_j - tj[3]) + tj[4] * lin_x + tj[5] * lin_y
    rd[row] = var_phi_j
    row += 1
    if two_an:
        b[row, 2] = tl[4]
        b[row, 3] = tl[5]
        r[row] = wrap(phi_l - tl[3]) + tl[4] * lin_x + tl[5] * lin_y
        rd[row] = var_phi_l
        row += 1

    # velocity as the average over the last period
    b[row, 2] = -1.0 / dt_s
    b[row, 4] = 1.0
    r[row] = -prev_x / dt_s
    rd[row] = prev_var_x / (dt_s * dt_s)
    row += 1
    b[row, 3] = -1.0 / dt_s
    b[row, 5] = 1.0
    r[row] = -prev_y / dt_s
    rd[row] = prev_var_y / (dt_s * dt_s)
    return b, r, rd


@njit
def correct(b, r, r_diag):
    """Unweighted least-squares solve with propagated covariance.

    Columns are equilibrated before a QR factorisation; returns
    ``(mean, cov, ok, cond)`` where ``cond`` is the condition estimate of the
    scaled triangular factor.
    """
    m, n = b.shape
    scale = np.empty(n)
    for j in range(n):
        s = 0.0
        for i in range(m):
            s += b[i, j] * b[i, j]
        scale[j] = math.sqrt(s)
    mean = np.zeros(n)
    cov = np.zeros((n, n))
    if m < n or scale.min() == 0.0:
        return mean, cov, False, np.inf
    bs = b / scale
    q, rt = np.linalg.qr(bs)
    diag = np.abs(np.diag(rt))
    cond = diag.max() / diag.min() if diag.min() > 0.0 else np.inf
    if not cond < 1.0 / RANK_RCOND:
        return mean, cov, False, cond
    pinv = np.linalg.solve(rt, q.T)
    for j in range(n):
        pinv[j, :] /= scale[j]
    mean = pinv @ r
    weighted = pinv * r_diag
    cov = weighted @ pinv.T
    return mean, 0.5 * (cov + cov.T), True, cond


@njit
def is_pd(a):
    """Cholesky test on the diagonally scaled matrix."""
    n = a.shape[0]
    d = np.empty(n)
    for i in range(n):
        if not a[i, i] > 0.0 or not math.isfinite(a[i, i]):
            return False
        d[i] = 1.0 / math.sqrt(a[i, i])
    s = a * np.outer(d, d)
    low = np.zeros((n, n))
    for j in range(n):
        acc = s[j, j]
        for k in range(j):
            acc -= low[j, k] * low[j, k]
        if not acc > 0.0:
            return False
        low[j, j] = math.sqrt(acc)
        for i in range(j + 1, n):
            acc = s[i, j]
            for k in range(j):
                acc -= low[i, k] * low[j, k]
            low[i, j] = acc / low[j, j]
    return True


@njit
def fuse(mean_p, cov_p, mean_c, cov_c):
    """Product of two Gaussians; returns ``(mean, cov, ok)``.

    Uses ``K = Sp (Sp + Sc)^-1``, ``mean = mp + K (mc - mp)`` and
    ``cov = K Sc``, which equal the information-form product.
    """
    if not (is_pd(cov_p) and is_pd(cov_c)):
        return mean_p.copy(), cov_p.copy(), False
    s = cov_p + cov_c
    d = 1.0 / np.sqrt(np.diag(s))
    ss = s * np.outer(d, d)
    if not is_pd(ss):
        return mean_p.copy(), cov_p.copy(), False
    # S^-1 Sp = D (D S D)^-1 D Sp
    y = np.linalg.solve(ss, cov_p * d.reshape(-1, 1))
    gain = (y * d.reshape(-1, 1)).T
    mean = mean_p + gain @ (mean_c - mean_p)
    cov = gain @ cov_c
    return mean, 0.5 * (cov + cov.T), True


@njit
def filter_step(mean, cov, rec, an_j, an_l, phi_j, var_phi_j, phi_l, var_phi_l, two_an, dt_s,
                q_diag, var_t, var_r, var_jl):
    """One predict-linearise-correct-fuse round; returns ``(mean, cov, flags, cond)``."""
    flags = 0
    mp, pp = predict(mean, cov, dt_s, q_diag)
    use_two = two_an and math.isfinite(an_l[0]) and math.isfinite(rec[6])
    if two_an and not use_two:
        flags |= FLAG_NO_PASSIVE
    lin_x = mp[2]
    lin_y = mp[3]
    me = mp
    pe = pp
    cond = np.inf
    for _ in range(RELIN_ITERS):
        if (lin_x == an_j[0] and lin_y == an_j[1]) or (use_two and lin_x == an_l[0]
                                                       and lin_y == an_l[1]):
            return mp, pp, flags | FLAG_RANK, np.inf
        b, r, rd = build_system(rec, phi_j, var_phi_j, phi_l, var_phi_l, an_j, an_l, use_two,
                                lin_x, lin_y, mean[2], mean[3], cov[2, 2], cov[3, 3], dt_s,
                                var_t, var_r, var_jl)
        mc, pc, ok, cond = correct(b, r, rd)
        if not ok or not np.all(np.isfinite(mc)):
            return mp, pp, flags | FLAG_RANK, cond
        me, pe, ok = fuse(mp, pp, mc, pc)
        if not ok:
            return mp, pp, flags | FLAG_FUSE, cond
        if not (me[0] > 0.0) or not np.all(np.isfinite(me)):
            return mp, pp, flags | FLAG_DIVERGED, cond
        moved = math.hypot(me[2] - lin_x, me[3] - lin_y)
        lin_x = me[2]
        lin_y = me[3]
        if moved < RELIN_TOL_M:
            break
    return me, pe, flags, cond


@njit
def run_filter(mean0, cov0, readings, an_j, an_l, phi_j, var_phi_j, phi_l, var_phi_l, two_an,
               dt_s, q_diag, var_t, var_r, var_jl):
    """Run the recursion over ``K`` rounds of pre-generated measurements.

    Returns per-round means ``(K, 6)``, covariances ``(K, 6, 6)``, flags and
    correction condition numbers.
    """
    k_rounds = readings.shape[0]
    means = np.empty((k_rounds, N_STATE))
    covs = np.empty((k_rounds, N_STATE, N_STATE))
    flags = np.zeros(k_rounds, dtype=np.int64)
    conds = np.empty(k_rounds)
    mean = mean0.copy()
    cov = cov0.copy()
    for k in range(k_rounds):
        mean, cov, f, c = filter_step(mean, cov, readings[k], an_j[k], an_l[k], phi_j[k],
                                      var_phi_j[k], phi_l[k], var_phi_l[k], two_an, dt_s, q_diag,
                                      var_t, var_r, var_jl)
        means[k] = mean
        covs[k] = cov
        flags[k] = f
        conds[k] = c
    return means, covs, flags, conds
