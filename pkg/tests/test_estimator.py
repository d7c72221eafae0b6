from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from syncloc.aoa import AoaObservation, aoa_variance
from syncloc.clocks import V_C, ClockParams
from syncloc.estimator import (FilterConfig, FilterDivergence, LinearSystem, MeasurementBundle,
                               NoiseConfig, RankDeficientError, StateEstimate, build_system_one_an,
                               build_system_two_an, correct, extract_estimates, fuse, init_state,
                               linearize, predict, step, table_q)
from syncloc.geometry import distance, true_aoa
from syncloc.protocol import DelayModel, run_exchange_round
from syncloc.verify import fuse_info_form, pinv_oracle, random_spd
from syncloc.world import AccessNode

DT = 0.2
UNIT = ClockParams()
QUIET = DelayModel(mu_t=0.0, sigma_t=0.0, sigma_r=0.0, sigma_jl=0.0)
AN_J = AccessNode(0, (0.0, 0.0), 0.0)
AN_L = AccessNode(1, (60.0, 5.0), np.pi / 2)
MN_CLOCK = ClockParams(1.00004, 321.0)


def test_init_state():
    s = init_state((100.0, 50.0), 2.0)
    np.testing.assert_array_equal(s.mean, [1, 0, 100, 50, 0, 0])
    assert s.cov[2, 2] == s.cov[3, 3] == 4.0
    assert s.is_valid()


def test_predict_examples():
    still = StateEstimate([1, 0, 10, 20, 0, 0], np.eye(6))
    np.testing.assert_allclose(predict(still, 3.7, np.zeros(6)).position, (10, 20))
    moving = StateEstimate([1, 5, 0, 0, 2, -1], np.eye(6))
    p = predict(moving, 0.2, np.zeros(6))
    np.testing.assert_allclose(p.position, (0.4, -0.2))
    np.testing.assert_array_equal(p.mean[:2], (1, 5))
    a = np.eye(6)
    a[2, 4] = a[3, 5] = 0.2
    np.testing.assert_allclose(p.cov, a @ a.T)
    assert p.k == 1


def test_predict_rejects_non_pd():
    with pytest.raises(ValueError):
        predict(StateEstimate(np.zeros(6), -np.eye(6)), 0.2, np.zeros(6))


def test_linearize_345():
    t = linearize((3.0, 4.0), (0.0, 0.0))
    assert t.a0 == pytest.approx(5 / V_C)
    assert t.a_x == pytest.approx(3 / (5 * V_C))
    assert t.a_y == pytest.approx(4 / (5 * V_C))
    assert t.b0 == pytest.approx(0.9273, abs=1e-4)
    assert t.b_x == pytest.approx(-4 / 25)
    assert t.b_y == pytest.approx(3 / 25)


def test_linearize_due_east():
    t = linearize((7.0, 0.0), (0.0, 0.0))
    assert t.b_x == 0.0
    assert t.b_y == pytest.approx(1 / 7)


def test_linearize_rejects_coincident():
    with pytest.raises(ValueError):
        linearize((1.0, 2.0), (1.0, 2.0))


@given(st.floats(-np.pi, np.pi), st.floats(0.5, 500.0))
def test_range_gradient_is_radial(ang, d):
    u = np.array([np.cos(ang), np.sin(ang)])
    t = linearize(d * u, (0.0, 0.0))
    assert np.dot((t.a_x, t.a_y), u) == pytest.approx(1 / V_C, rel=1e-12)
    assert np.hypot(t.a_x, t.a_y) == pytest.approx(1 / V_C, rel=1e-12)


def zero_noise_case(pos=(20.0, 8.0), vel=(1.5, -0.5), mn_clock=MN_CLOCK):
    """Noise-free record at truth plus the true state vector."""
    pos = np.asarray(pos)
    prev_pos = pos - DT * np.asarray(vel)
    d_j, d_l = distance(pos, AN_J.position), distance(pos, AN_L.position)
    rec = run_exchange_round(mn_clock, UNIT, UNIT, d_j, d_l, QUIET, None, t_start=5e7,
                             noise=False)
    aj = AoaObservation(true_aoa(pos, AN_J.position), 1e-6, 0)
    al = AoaObservation(true_aoa(pos, AN_L.position), 1e-6, 1)
    g, th = mn_clock.skew, mn_clock.offset
    truth = np.array([1 / g, th / g, *pos, *vel])
    pred = StateEstimate(truth, np.eye(6))
    prev = StateEstimate([1 / g, th / g, *prev_pos, *vel], np.eye(6) * 0.04)
    return rec, aj, al, truth, pred, prev


def test_one_an_system_structure_and_residual():
    rec, aj, _, truth, pred, prev = zero_noise_case()
    noise = NoiseConfig(sigma_t=0.3, sigma_r=0.5)
    sys = build_system_one_an(rec, aj, pred, prev, AN_J, DT, noise)
    assert sys.B.shape == (6, 6)
    np.testing.assert_array_equal(sys.B[3, :2], 0.0)
    assert sys.r_diag[0] == pytest.approx(2 * 0.3**2)
    assert sys.r_diag[1] == pytest.approx(0.3**2 + 0.5**2)
    assert sys.r_diag[2] == pytest.approx(0.5**2)
    assert sys.r_diag[3] == aj.variance
    np.testing.assert_allclose(sys.r_diag[4:], 0.04 / DT**2)
    res = sys.B @ truth - sys.r
    scale = np.abs(sys.B) @ np.abs(truth) + np.abs(sys.r)
    assert np.max(np.abs(res) / np.maximum(scale, 1.0)) <= 1e-9


def test_two_an_system_structure_and_residual():
    rec, aj, al, truth, pred, prev = zero_noise_case()
    noise = NoiseConfig(sigma_t=0.3, sigma_r=0.5, sigma_jl=1.0)
    sys = build_system_two_an(rec, aj, al, pred, prev, AN_J, AN_L, DT, noise)
    assert sys.B.shape == (7, 6)
    np.testing.assert_array_equal(sys.B[2, :2], 0.0)
    assert sys.r_diag[2] == pytest.approx(2 * 0.5**2 + 1.0)
    res = sys.B @ truth - sys.r
    scale = np.abs(sys.B) @ np.abs(truth) + np.abs(sys.r)
    assert np.max(np.abs(res) / np.maximum(scale, 1.0)) <= 1e-9


def test_two_an_symmetric_geometry_cancels():
    pos = (30.0, 2.5)  # equidistant from AN_J and AN_L
    rec, *_ = zero_noise_case(pos=pos)
    assert distance(pos, AN_J.position) == pytest.approx(distance(pos, AN_L.position))
    assert rec.c_l_t7 - rec.c_j_t6 == pytest.approx(0.0, abs=1e-6)


def test_two_an_needs_passive_reading():
    rec, aj, al, _, pred, prev = zero_noise_case()
    rec = type(rec)(*[getattr(rec, f) for f in ("c_j_t1", "c_i_t2", "c_j_t3", "c_i_t4",
                                                "c_i_t5", "c_j_t6")])
    with pytest.raises(ValueError):
        build_system_two_an(rec, aj, al, pred, prev, AN_J, AN_L, DT, NoiseConfig())


def test_correct_identity():
    r = np.arange(6.0)
    v = np.linspace(0.1, 0.6, 6)
    mean, cov = correct(LinearSystem(np.eye(6), r, v))
    np.testing.assert_allclose(mean, r)
    np.testing.assert_allclose(cov, np.diag(v), atol=1e-15)


def test_correct_square_system(rng):
    b = rng.normal(size=(6, 6)) + 3 * np.eye(6)
    _, cov = correct(LinearSystem(b, rng.normal(size=6), np.ones(6)))
    binv = np.linalg.inv(b)
    np.testing.assert_allclose(cov, binv @ binv.T, rtol=1e-9, atol=1e-12)


def test_correct_matches_pinv_oracle(rng):
    for _ in range(10):
        b = rng.normal(size=(7, 6)) * 10.0 ** rng.uniform(-3, 3, 6)
        r = rng.normal(size=7)
        rd = rng.uniform(0.1, 2, 7)
        mean, cov = correct(LinearSystem(b, r, rd))
        p = pinv_oracle(b)
        np.testing.assert_allclose(mean, p @ r, rtol=1e-9, atol=1e-12 * np.abs(p @ r).max())
        ref = p @ np.diag(rd) @ p.T
        np.testing.assert_allclose(cov, ref, rtol=1e-9, atol=1e-9 * np.abs(ref).max())


def test_correct_rank_deficient():
    b = np.eye(7, 6)
    b[:, 3] = b[:, 2]
    with pytest.raises(RankDeficientError):
        correct(LinearSystem(b, np.ones(7), np.ones(7)))


def test_fuse_equal_confidence():
    mp, mc = np.arange(6.0), np.ones(6) * 4
    out = fuse(StateEstimate(mp, np.eye(6)), mc, np.eye(6))
    np.testing.assert_allclose(out.mean, (mp + mc) / 2)
    np.testing.assert_allclose(out.cov, np.eye(6) / 2)


def test_fuse_uninformative_prior():
    mc = np.linspace(-1, 1, 6)
    out = fuse(StateEstimate(np.zeros(6), np.eye(6) * 1e12), mc, np.eye(6))
    np.testing.assert_allclose(out.mean, mc, atol=1e-9)


def test_fuse_rejects_non_pd():
    with pytest.raises(ValueError):
        fuse(StateEstimate(np.zeros(6), np.eye(6)), np.zeros(6), -np.eye(6))


@given(st.integers(0, 2**32 - 1))
def test_fuse_properties(seed):
    rng = np.random.default_rng(seed)
    sp, sc = random_spd(rng, spread=2.0), random_spd(rng, spread=2.0)
    mp, mc = rng.normal(size=6), rng.normal(size=6)
    a = fuse(StateEstimate(mp, sp), mc, sc)
    b = fuse(StateEstimate(mc, sc), mp, sp)
    m_ref, s_ref = fuse_info_form(mp, sp, mc, sc)
    np.testing.assert_allclose(a.mean, m_ref, rtol=1e-8, atol=1e-8 * np.abs(m_ref).max())
    np.testing.assert_allclose(a.cov, s_ref, rtol=1e-8, atol=1e-8 * np.abs(s_ref).max())
    np.testing.assert_allclose(a.mean, b.mean, rtol=1e-8, atol=1e-8 * np.abs(a.mean).max())
    np.testing.assert_allclose(a.cov, b.cov, rtol=1e-8, atol=1e-8 * np.abs(a.cov).max())
    np.testing.assert_array_equal(a.cov, a.cov.T)
    for other in (sp, sc):
        gap = np.linalg.eigvalsh(other - a.cov)
        assert gap.min() >= -1e-9 * np.abs(other).max()


def test_extract_estimates():
    assert extract_estimates(StateEstimate([1, 5, 3, 4, 0, 0], np.eye(6))) == (1, 5, 3, 4)
    g, th, _, _ = extract_estimates(StateEstimate([0.5, 5, 0, 0, 0, 0], np.eye(6)))
    assert (g, th) == (2.0, 10.0)
    with pytest.raises(FilterDivergence):
        extract_estimates(StateEstimate([-0.1, 5, 0, 0, 0, 0], np.eye(6)))


def static_bundle(mode_two, pos=(23.0, 6.0)):
    d_j, d_l = distance(pos, AN_J.position), distance(pos, AN_L.position)
    rec = run_exchange_round(MN_CLOCK, UNIT, UNIT if mode_two else None, d_j,
                             d_l if mode_two else None, QUIET, None, noise=False)
    def obs(an, d):
        ang = true_aoa(pos, an.position)
        return AoaObservation(ang, float(aoa_variance(ang, d, an.axis_angle)), an.id)
    return MeasurementBundle(rec, AN_J, obs(AN_J, d_j),
                             AN_L if mode_two else None, obs(AN_L, d_l) if mode_two else None)


def converge(mode, q_diag):
    pos = (23.0, 6.0)
    bundle = static_bundle(mode == "two_an", pos)
    cfg = FilterConfig(mode=mode, noise=NoiseConfig(0.0, 0.0, 0.0, q_diag))
    state = init_state((pos[0] + 1.5, pos[1] - 1.0), 2.0)
    for _ in range(10):
        state = step(state, bundle, cfg)
        assert state.flags == 0
    g, th, x, y = extract_estimates(state)
    assert np.hypot(x - pos[0], y - pos[1]) < 0.01
    assert abs(th - MN_CLOCK.offset) < 0.01
    assert g == pytest.approx(MN_CLOCK.skew, rel=1e-6)
    assert state.k == 10


@pytest.mark.parametrize("mode", ["one_an", "two_an"])
def test_step_zero_noise_static_convergence(mode):
    converge(mode, table_q())


@pytest.mark.xfail(strict=True, reason="with Q = 0 the velocity pseudo-rows re-use the fused "
                   "position and the recursion locks onto a spurious velocity")
@pytest.mark.parametrize("mode", ["one_an", "two_an"])
def test_step_zero_noise_static_convergence_without_process_noise(mode):
    converge(mode, np.zeros(6))


def test_step_is_deterministic():
    bundle = static_bundle(True)
    cfg = FilterConfig()
    s0 = init_state((20.0, 5.0), 2.0)
    a, b = step(s0, bundle, cfg), step(s0, bundle, cfg)
    np.testing.assert_array_equal(a.mean, b.mean)
    np.testing.assert_array_equal(a.cov, b.cov)


def test_step_missing_aoa():
    bundle = static_bundle(True)
    s0 = init_state((20.0, 5.0), 2.0)
    before = s0.mean.copy()
    with pytest.raises(ValueError):
        step(s0, MeasurementBundle(bundle.record, AN_J, None), FilterConfig())
    with pytest.raises(ValueError):
        step(s0, MeasurementBundle(bundle.record, AN_J, bundle.aoa_j, AN_L, None),
             FilterConfig())
    np.testing.assert_array_equal(s0.mean, before)
