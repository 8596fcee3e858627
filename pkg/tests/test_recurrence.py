import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from potdim import recurrence as R
from potdim import systems as S
from potdim._rng import make_rng

from potdim.estimators import ratio_from_distances

from _oracles import kth_smallest_uniform_radius, self_similar_points


# ---------------------------------------------------------------- buffer

@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(1, 300), elements=st.floats(0, 100)),
       st.integers(1, 50))
def test_buffer_holds_k_smallest_positive(d, k):
    buf = R.RecurrenceBuffer(k, 1)
    buf.feed(d[:, None], [0.0])
    pos = np.sort(d[d > 0])
    np.testing.assert_array_equal(buf.distances(), pos[:k])
    assert buf.full == (pos.size >= k)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.integers(20, 300), elements=st.floats(1e-6, 1.0)),
       st.integers(1, 10))
def test_buffer_radius_non_increasing(d, k):
    buf = R.RecurrenceBuffer(k, 1)
    last = math.inf
    for i in range(0, d.size, 7):
        buf.feed(d[i:i + 7, None], [0.0])
        if buf.full:
            assert buf.radius <= last
            last = buf.radius


def test_push_matches_feed_and_keeps_states():
    rng = make_rng(0)
    pts = rng.random((500, 2))
    z = np.array([0.5, 0.5])
    a = R.RecurrenceBuffer(20, 2)
    a.feed(pts, z)
    b = R.RecurrenceBuffer(20, 2)
    for i, p in enumerate(pts):
        b.push(float(np.linalg.norm(p - z)), p, i)
    np.testing.assert_allclose(a.distances(), b.distances(), rtol=1e-15)
    np.testing.assert_allclose(np.linalg.norm(a.states() - z, axis=1), a.distances(), rtol=1e-14)
    np.testing.assert_array_equal(a.times(), b.times())
    assert not b.push(0.0, z)


def test_shuffle_invariance_of_final_buffer():
    pts = S.HenonOrbit((0.1, 0.1)).take(200_000)
    z = pts[12345] + 1e-3
    a = R.RecurrenceBuffer(500, 2)
    a.feed(pts, z)
    b = R.RecurrenceBuffer(500, 2)
    b.feed(make_rng(1).permutation(pts), z)
    np.testing.assert_array_equal(a.distances(), b.distances())
    sa = {tuple(x) for x in a.states()}
    sb = {tuple(x) for x in b.states()}
    assert sa == sb


def test_fixed_point_orbit():
    p = np.array([0.3, -0.2])
    z = p + np.array([0.01, 0.0])
    orbit = np.tile(p, (2000, 1))
    buf = R.track_recurrences(S.PointStream(orbit), z, iters=1000, k=50, burn_in=0)
    d = buf.distances()
    assert len(d) == 50 and np.all(d == d[0])
    tr = R.zoom_trace(S.PointStream(orbit), z, iters=1600, k=50, burn_in=0, with_corr=False)
    # r never shrinks, so only the first checkpoint survives
    assert len(tr) == 1
    # the fixed point itself as reference: no positive distance at all
    buf0 = R.track_recurrences(S.PointStream(orbit), p, iters=100, k=10, burn_in=0)
    assert len(buf0) == 0 and buf0.partial


def test_attracting_henon_fixed_point():
    # at a = 0.2 the fixed point attracts; rounding leaves a 2-cycle of ULP size
    p = S.henon_fixed_point(0.2, 0.3)
    z = p + np.array([0.01, 0.0])
    buf = R.track_recurrences("henon", z, p, iters=1000, k=50, burn_in=1000,
                              params={"a": 0.2, "b": 0.3})
    np.testing.assert_allclose(buf.distances(), 0.01, rtol=1e-12)


def test_uniform_iid_radius_order_statistic():
    n, k = 100_000, 100
    u = make_rng(2).random((n, 1))
    buf = R.track_recurrences(S.PointStream(u), [0.5], iters=n, k=k, burn_in=0)
    mean, sd = kth_smallest_uniform_radius(k, n)
    assert abs(buf.radius - mean) < 3 * sd
    assert mean == pytest.approx(k / (2 * n), rel=0.01)


@pytest.mark.slow
def test_henon_radius_shrinks_three_decades():
    orb = S.HenonOrbit((0.1, 0.1))
    orb.take(1000)
    z = S.HenonOrbit((0.2, 0.1)).take(5000)[-1]
    k = 5000
    first = np.linalg.norm(S.HenonOrbit((0.1, 0.1)).take(1000 + k)[1000:] - z, axis=1).max()
    buf = R.track_recurrences("henon", z, (0.1, 0.1), iters=10 ** 7, k=k, burn_in=1000)
    assert math.log10(first / buf.radius) >= 3


def test_orbit_mode_excludes_window():
    pts = S.HenonOrbit((0.1, 0.1)).take(50_000)
    j, w = 20_000, 10
    buf = R.track_recurrences(S.PointStream(pts), iters=50_000, k=200, burn_in=0,
                              zeta_index=j, window=w)
    assert buf.mode == "orbit"
    t = buf.times()
    assert not np.any(np.abs(t - j) <= w)
    ref = np.linalg.norm(pts - pts[j], axis=1)
    ref[j - w:j + w + 1] = np.inf
    np.testing.assert_allclose(buf.distances(), np.sort(ref[ref > 0])[:200])
    with pytest.raises(ValueError):
        R.track_recurrences(S.PointStream(pts), iters=100, k=5, burn_in=0, zeta_index=500)


def test_partial_buffer_flag():
    buf = R.track_recurrences(S.PointStream(np.arange(1.0, 6.0)), [0.0], iters=5, k=10,
                              burn_in=0)
    assert buf.partial and len(buf) == 5


# ---------------------------------------------------------------- zoom traces

def test_checkpoint_schedule():
    np.testing.assert_array_equal(R.checkpoint_schedule(1000, 100), [125, 250, 500, 1000])
    assert R.checkpoint_schedule(1000, 100, count=2).tolist() == [500, 1000]
    with pytest.raises(ValueError):
        R.checkpoint_schedule(1000, 100, growth=1.0)


def test_zoom_trace_invariants():
    tr = R.zoom_trace("henon", (0.6, 0.1), (0.1, 0.1), iters=400_000, k=500)
    assert len(tr) >= 5
    assert np.all(np.diff(tr.r) < 0)
    np.testing.assert_array_equal(tr.R_half, tr.n_inside_half / tr.k)
    assert np.all((tr.R_half >= 0) & (tr.R_half <= 1))
    assert np.all(tr.ebd_dim > 0)
    rows = tr.rows(3)
    assert rows[0]["point_id"] == 3 and set(rows[0]) == {
        "point_id", "checkpoint", "iters", "r", "R_half", "ebd_dim", "corr_dim"}


def test_self_similar_set_ratio_half():
    # 2^L left endpoints of the middle-third construction, reference at the
    # origin (itself excluded as a zero distance). A buffer holding one whole
    # level-(m-1) cylinder has r = 3^-(m-1) - 3^-L; the half-radius ball then
    # holds exactly one of its two children.
    L = 12
    pts = self_similar_points(L)
    for m in range(2, 9):
        k = 2 ** (L - m + 1) - 1
        buf = R.RecurrenceBuffer(k, 1)
        buf.feed(pts[:, None], [0.0])
        assert buf.radius == pytest.approx(3.0 ** -(m - 1) - 3.0 ** -L, rel=1e-12)
        ratio, n_in = ratio_from_distances(buf.distances(), 0.5)
        assert n_in == 2 ** (L - m) - 1
        assert abs(ratio - 0.5) < 2.0 ** -(L - m + 1)


def test_self_similar_set_endpoint_radius():
    # from the end of a cylinder, r = 2 * 3^-m reaches only the first point of
    # the sibling, so halving the radius loses just that one point
    L = 12
    pts = self_similar_points(L)
    for m in range(2, 9):
        k = 2 ** (L - m)
        buf = R.RecurrenceBuffer(k, 1)
        buf.feed(pts[:, None], [0.0])
        assert buf.radius == pytest.approx(2 * 3.0 ** -m, rel=1e-12)
        assert ratio_from_distances(buf.distances(), 0.5)[0] == (k - 1) / k


def test_zoom_shuffle_invariance_of_final_row():
    pts = S.fat_cantor_sample(50_000, 20, make_rng(3))
    z = [pts[0] + 1e-7]
    a = R.zoom_trace(S.PointStream(pts), z, iters=pts.size, k=500, burn_in=0)
    b = R.zoom_trace(S.PointStream(make_rng(4).permutation(pts)), z, iters=pts.size, k=500,
                     burn_in=0)
    assert a.r[-1] == b.r[-1]
    assert a.R_half[-1] == b.R_half[-1]
    assert a.ebd_dim[-1] == b.ebd_dim[-1]


# ---------------------------------------------------------------- transits

def test_line_through_ball():
    traj = S.integrate("line", [-5.0, 0.3, 0.0], 0.01, 1000)
    (tr,) = R.ball_transits("line", [0.0, 0.0, 0.0], traj, 1.0)
    assert tr.t_min == pytest.approx(5.0, abs=1e-6)
    assert tr.d_min == pytest.approx(0.3, abs=1e-12)
    half = math.sqrt(1 - 0.09)
    assert tr.t_entry == pytest.approx(5.0 - half, abs=1e-8)
    assert tr.t_exit == pytest.approx(5.0 + half, abs=1e-8)
    np.testing.assert_allclose(tr.closest, [0.0, 0.3, 0.0], atol=1e-6)


def test_line_through_centre():
    traj = S.integrate("line", [-5.0, 0.0, 0.0], 0.01, 1000)
    (tr,) = R.ball_transits("line", [0.0, 0.0, 0.0], traj, 0.5)
    assert tr.d_min == pytest.approx(0.0, abs=1e-6)
    assert tr.t_min == pytest.approx(5.0, abs=1e-6)


def test_short_transit_inside_one_step():
    # the chord is shorter than the step and no sample falls inside the ball
    traj = S.integrate("line", [-5.005, 0.0, 0.0], 0.1, 100)
    (tr,) = R.ball_transits("line", [0.0, 0.0, 0.0], traj, 0.02)
    # roots are located to 1e-6 of a step
    assert tr.t_exit - tr.t_entry == pytest.approx(0.04, abs=2e-7)


def test_circle_one_transit_per_period():
    delta = 0.05
    zeta = [1.0 + delta, 0.0, 0.0]
    traj = S.integrate("rotation", [-1.0, 0.0, 0.0], 0.01, 10_000)
    out = R.ball_transits("rotation", zeta, traj, 0.2)
    t_end = traj.t[-1]
    # closest approaches at t = pi + 2 pi n
    expected = [math.pi + 2 * math.pi * n for n in range(20)
                if math.pi + 2 * math.pi * n + 0.3 < t_end]
    assert len(out) == len(expected)
    for tr, t in zip(out, expected):
        assert tr.d_min == pytest.approx(delta, abs=1e-9)
        assert tr.t_min == pytest.approx(t, abs=1e-5)
        assert tr.t_entry <= tr.t_min <= tr.t_exit


def test_transit_invariants_and_start_inside():
    zeta = np.array([1.0, 0.0, 0.0])
    traj = S.integrate("rotation", [1.0, 0.01, 0.0], 0.01, 2000)
    r = 0.3
    rho, phase = math.hypot(1.0, 0.01), math.atan2(0.01, 1.0)
    out = R.ball_transits("rotation", zeta, traj, r)
    # the trajectory starts inside the ball; that truncated passage is dropped
    assert all(tr.t_entry > 1.0 for tr in out)
    for tr in out:
        for t in (tr.t_entry, tr.t_exit):
            y = rho * np.array([math.cos(t + phase), math.sin(t + phase), 0.0])
            assert abs(np.linalg.norm(y - zeta) - r) < 1e-6
        assert tr.d_min < r


def test_graze_dropped_and_counted():
    r = 0.3 * (1 + 1e-14)
    traj = S.integrate("line", [-5.0, 0.3, 0.0], 0.01, 1000)
    out, counts = R.ball_transits("line", [0.0, 0.0, 0.0], traj, r, return_counts=True)
    assert out == [] and counts["grazes"] == 1


def test_transit_validation():
    traj = S.integrate("line", [-5.0, 0.3, 0.0], 0.01, 10)
    with pytest.raises(ValueError):
        R.ball_transits("line", [0.0, 0.0], traj, 1.0)
    with pytest.raises(ValueError):
        R.ball_transits("line", [0.0, 0.0, 0.0], traj, 0.0)
    with pytest.raises(ValueError):
        R.ball_transits("lorenz63", [0.0, 0.0, 0.0], traj, 1.0)


@pytest.fixture(scope="module")
def lorenz_traj():
    traj = S.integrate("lorenz63", [1.0, 1.0, 1.0], 0.01, 60_000)
    return traj, traj.y[30_000].copy()


def test_lorenz_transit_count_falls_with_radius(lorenz_traj):
    traj, z = lorenz_traj
    counts = [len(R.ball_transits("lorenz63", z, traj, r)) for r in (2.0, 1.0, 0.5, 0.25)]
    assert all(a > b for a, b in zip(counts, counts[1:]))


def test_lorenz_one_point_per_transit():
    tr = R.continuous_zoom_trace("lorenz63", [1.0, 2.0, 20.0], [1.0, 1.0, 1.0],
                                 total_time=2000.0, k=100, with_corr=False)
    assert tr.meta["offered"] == tr.meta["transits"] > 100
    assert tr.dim_offset == 1.0
    assert np.all(np.diff(tr.r) < 0)


def test_plane_crossings_of_torus_flow():
    # the linear torus flow fills a 2-torus; one point per transit leaves a
    # 1-dimensional crossing set, reported as 1 + 1
    tr = R.continuous_zoom_trace("torus", [1.0, 0.0, 1.0, 0.0], [0.0, 1.0, 0.0, 1.0],
                                 total_time=20_000.0, k=300, dt=0.05, burn_in_time=0.0,
                                 r0=0.3, with_corr=False)
    assert not tr.partial
    assert tr.ebd_dim[-1] == pytest.approx(2.0, abs=0.3)


def test_continuous_zoom_partial():
    tr = R.continuous_zoom_trace("rotation", [1.05, 0.0, 0.0], [-1.0, 0.0, 0.0],
                                 total_time=20.0, k=50, burn_in_time=0.0, r0=0.2,
                                 with_corr=False)
    assert tr.partial and len(tr) == 0


# ---------------------------------------------------------------- ensembles

def _toy_trace(seed, n=8):
    rng = make_rng(seed)
    r = np.sort(10 ** -rng.uniform(0, 3, n))[::-1]
    ratio = rng.uniform(0.3, 0.7, n)
    return R.ZoomTrace(np.arange(n), r, ratio, rng.uniform(1, 2, n), rng.uniform(1, 2, n),
                       (ratio * 100).astype(int), 100)


def test_aggregate_single_trace_has_zero_std():
    t = _toy_trace(0)
    agg = R.aggregate_traces([t])
    assert np.all(agg.std_R_half == 0) and np.all(agg.n_points == 1)
    x = t.log10_r[::-1]
    np.testing.assert_allclose(agg.mean_ebd, np.interp(agg.log10_r, x, t.ebd_dim[::-1]))


@settings(max_examples=20, deadline=None)
@given(st.randoms())
def test_aggregate_permutation_invariance(rnd):
    traces = [_toy_trace(s) for s in range(7)]
    perm = traces[:]
    rnd.shuffle(perm)
    a, b = R.aggregate_traces(traces), R.aggregate_traces(perm)
    for col in ("mean_R_half", "std_R_half", "mean_ebd", "std_ebd", "n_points"):
        np.testing.assert_array_equal(getattr(a, col), getattr(b, col))


def test_aggregate_grid_and_plateau():
    agg = R.aggregate_traces([_toy_trace(s) for s in range(5)])
    np.testing.assert_allclose(np.diff(agg.log10_r), -0.1, atol=1e-9)
    sel = agg.n_points >= 0.9 * agg.n_points.max()
    assert agg.plateau_mean() == pytest.approx(agg.mean_ebd[sel].mean())
    with pytest.raises(ValueError):
        R.aggregate_traces([])


def test_ensemble_single_reference():
    res = R.ensemble_zoom("henon", 1, iters=200_000, k=500, seed=3)
    assert np.all(res.aggregate.std_ebd == 0)
    assert res.excluded == []


def test_ensemble_deterministic_and_thread_independent():
    a = R.ensemble_zoom("henon", 4, iters=100_000, k=200, seed=5, with_corr=False)
    b = R.ensemble_zoom("henon", 4, iters=100_000, k=200, seed=5, with_corr=False, threads=2)
    np.testing.assert_array_equal(a.final_ebd, b.final_ebd)
    np.testing.assert_array_equal(a.aggregate.mean_R_half, b.aggregate.mean_R_half)


def test_reference_points_shapes():
    rng = make_rng(0)
    zs, x0s = R.reference_points("henon", 3, rng)
    assert len(zs) == 3 and all(z.shape == (2,) for z in zs)
    assert not np.allclose(zs[0], x0s[0])
    zs, x0s = R.reference_points("lorenz63", 2, rng)
    assert zs[0].shape == (3,) and x0s[1].shape == (3,)


def test_along_orbit_estimates():
    est = R.along_orbit_estimates("henon", 5, iters=100_000, k=200, seed=1)
    assert est.shape == (5,) and np.all((est > 0.8) & (est < 2.0))
