"""Planar geometry primitives and the line-of-sight / AN-selection kernels."""

from __future__ import annotations

import math

import numpy as np

from ._accel import njit

_LOS_EPS = 1e-9


def wrap_angle(x):
    """Map angles into (-pi, pi]."""
    return x - 2.0 * np.pi * np.ceil((x - np.pi) / (2.0 * np.pi))


def distance(p, q):
    """Euclidean distance in metres; broadcasts over leading axes."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return np.hypot(p[..., 0] - q[..., 0], p[..., 1] - q[..., 1])


def true_aoa(mn, an):
    """Bearing from ``an`` to ``mn`` (four-quadrant), in (-pi, pi]."""
    mn = np.asarray(mn, dtype=float)
    an = np.asarray(an, dtype=float)
    dx = mn[..., 0] - an[..., 0]
    dy = mn[..., 1] - an[..., 1]
    if np.any((dx == 0.0) & (dy == 0.0)):
        raise ValueError("AoA undefined for coincident MN and AN")
    return wrap_angle(np.arctan2(dy, dx))


@njit
def _clip_segment(x0, y0, x1, y1, rect):
    # Liang-Barsky on the box grown by _LOS_EPS so boundary points count as inside.
    dx = x1 - x0
    dy = y1 - y0
    t_lo = 0.0
    t_hi = 1.0
    p = (-dx, dx, -dy, dy)
    q = (x0 - rect[0] + _LOS_EPS, rect[1] - x0 + _LOS_EPS,
         y0 - rect[2] + _LOS_EPS, rect[3] - y0 + _LOS_EPS)
    for k in range(4):
        if p[k] == 0.0:
            if q[k] < 0.0:
                return 1.0, 0.0
        else:
            t = q[k] / p[k]
            if p[k] < 0.0:
                if t > t_lo:
                    t_lo = t
            else:
                if t < t_hi:
                    t_hi = t
    return t_lo, t_hi


@njit
def segment_in_union(x0, y0, x1, y1, rects):
    """True when the segment is covered by the union of boxes ``rects`` (n, 4: xmin, xmax, ymin, ymax)."""
    n = rects.shape[0]
    lo = np.empty(n)
    hi = np.empty(n)
    m = 0
    for i in range(n):
        a, b = _clip_segment(x0, y0, x1, y1, rects[i])
        if b >= a:
            lo[m] = a
            hi[m] = b
            m += 1
    if m == 0:
        return False
    order = np.argsort(lo[:m])
    reach = 0.0
    for idx in order:
        if lo[idx] > reach + _LOS_EPS:
            return False
        if hi[idx] > reach:
            reach = hi[idx]
    return reach >= 1.0 - _LOS_EPS


@njit
def los_matrix(points, an_pos, rects):
    """LoS flags between every point (K, 2) and every AN (M, 2)."""
    k_pts = points.shape[0]
    m_an = an_pos.shape[0]
    out = np.zeros((k_pts, m_an), dtype=np.bool_)
    for k in range(k_pts):
        for j in range(m_an):
            out[k, j] = segment_in_union(points[k, 0], points[k, 1], an_pos[j, 0], an_pos[j, 1], rects)
    return out


@njit
def select_nearest_two(points, an_pos, rects, tie_tol):
    """Nearest and second-nearest LoS AN per point; -1 where none exists.

    ANs are scanned in id order and only a strictly shorter distance (by more
    than ``tie_tol``) displaces the incumbent, so ties go to the lower id.
    """
    k_pts = points.shape[0]
    m_an = an_pos.shape[0]
    first = np.full(k_pts, -1, dtype=np.int64)
    second = np.full(k_pts, -1, dtype=np.int64)
    for k in range(k_pts):
        px = points[k, 0]
        py = points[k, 1]
        d1 = np.inf
        d2 = np.inf
        i1 = -1
        i2 = -1
        for j in range(m_an):
            d = math.hypot(px - an_pos[j, 0], py - an_pos[j, 1])
            if d >= d2 - tie_tol and i2 >= 0:
                continue
            if not segment_in_union(px, py, an_pos[j, 0], an_pos[j, 1], rects):
                continue
            if i1 < 0 or d < d1 - tie_tol:
                d2 = d1
                i2 = i1
                d1 = d
                i1 = j
            elif i2 < 0 or d < d2 - tie_tol:
                d2 = d
                i2 = j
        first[k] = i1
        second[k] = i2
    return first, second
