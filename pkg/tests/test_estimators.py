import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from potdim import estimators as E
from potdim.recurrence import RecurrenceBuffer
from potdim._rng import make_rng


def _buffer(d):
    d = np.asarray(d, dtype=float)
    buf = RecurrenceBuffer(d.size, 1)
    buf.feed(d[:, None], [0.0])
    return buf


# ---------------------------------------------------------------- EBD

def test_ebd_constant_excesses():
    s = E.ExcessSample(0.0, 0.99, np.full(20, 0.25), 2000)
    fit = E.ebd_fit(s)
    assert fit.value == pytest.approx(4.0)
    assert fit.stderr == pytest.approx(4.0 / math.sqrt(20))
    assert fit.kind == "ebd"


def test_ebd_needs_samples_and_positive_excesses():
    with pytest.raises(ValueError):
        E.ebd_fit(E.ExcessSample(0.0, 0.99, np.ones(5), 500))
    with pytest.raises(ValueError):
        E.ExcessSample(0.0, 0.99, np.zeros(20), 2000)


def test_ebd_exponential_monte_carlo():
    rate = 1.26
    u = make_rng(1).exponential(1 / rate, size=10 ** 5)
    fit = E.ebd_fit(E.ExcessSample(0.0, None, u, u.size))
    assert abs(fit.value - rate) < 3 * fit.stderr


def test_ebd_line_through_reference():
    x = make_rng(2).uniform(-1, 1, size=10 ** 5)
    fit = E.ebd_fit(E.threshold_excesses(-np.log(np.abs(x)), 0.99))
    assert abs(fit.value - 1.0) < 3 * fit.stderr


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.integers(10, 200), elements=st.floats(1e-3, 10.0)),
       st.floats(-5, 5), st.randoms())
def test_ebd_invariances(u, shift, rnd):
    s = E.ExcessSample(0.0, None, u, u.size)
    perm = list(u)
    rnd.shuffle(perm)
    shifted = E.ExcessSample(shift, None, (u + shift) - shift, u.size)
    assert E.ebd_fit(s).value == pytest.approx(E.ebd_fit(E.ExcessSample(0, None, perm, 1)).value)
    assert E.ebd_fit(shifted).value == pytest.approx(E.ebd_fit(s).value)


def test_threshold_shift_invariance():
    x = make_rng(3).standard_normal(5000)
    a = E.threshold_excesses(x, 0.95)
    b = E.threshold_excesses(x + 7.5, 0.95)
    assert b.threshold == pytest.approx(a.threshold + 7.5)
    np.testing.assert_allclose(np.sort(a.excesses), np.sort(b.excesses), atol=1e-12)


def test_quantile_convention_count():
    d = make_rng(4).random(5000)
    s = E.excesses_from_buffer(_buffer(d), q=0.99)
    assert abs(len(s) - 50) <= 1
    with pytest.raises(ValueError):
        E.threshold_excesses(d, 1.0)


def test_excesses_at_buffer_radius():
    d = make_rng(5).random(100) + 0.1
    s = E.excesses_from_buffer(_buffer(d))
    # the farthest point sits on the threshold; all others are strictly inside
    assert len(s) == 99
    assert s.threshold == pytest.approx(-math.log(d.max()))


def test_excesses_from_buffer_rejects():
    with pytest.raises(ValueError):
        E.excesses_from_buffer(_buffer(np.full(20, 0.5)))
    buf = RecurrenceBuffer(10, 1)
    buf.feed(np.array([[0.1], [0.2]]), [0.0])
    buf.partial = True
    with pytest.raises(ValueError):
        E.excesses_from_buffer(buf)


# ---------------------------------------------------------------- R ratio

def test_ratio_line_and_disk():
    rng = make_rng(6)
    n = 20_000
    line = np.abs(rng.uniform(-1, 1, n))
    r = E.regular_variation_ratio(_buffer(line), 0.5)
    assert abs(r - 0.5) < 3 * math.sqrt(0.25 / n)
    disk = np.sqrt(rng.random(n))  # radial distance of uniform points in a disk
    r2 = E.regular_variation_ratio(_buffer(disk), 0.5)
    assert abs(r2 - 0.25) < 3 * math.sqrt(0.25 * 0.75 / n)
    assert E.regular_variation_ratio(_buffer(disk), 1.0) == 1.0


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.integers(2, 100), elements=st.floats(1e-6, 1.0)),
       st.sampled_from([0.5, 2.0, 3.0, 1e-3, 1e4]))
def test_ratio_scale_invariance(d, c):
    # powers of two and decimal scales; compare counts so rounding cannot flip a tie
    r1, n1 = E.ratio_from_distances(d, 0.5)
    r2, n2 = E.ratio_from_distances(d * c, 0.5)
    if c in (0.5, 2.0):
        assert n1 == n2
    else:
        assert abs(n1 - n2) <= int(np.sum(np.isclose(d, 0.5 * d.max(), rtol=1e-12)))


# ---------------------------------------------------------------- correlation dimension

def test_correlation_dimension_interval_and_square():
    rng = make_rng(7)
    x = rng.random(10 ** 5)
    d1 = E.correlation_dimension(x, 0.5)
    assert d1.value == pytest.approx(1.0, abs=0.05) and not d1.flagged
    sq = rng.random((10 ** 5, 2))
    d2 = E.correlation_dimension(sq, [0.5, 0.5])
    assert d2.value == pytest.approx(2.0, abs=0.1) and not d2.flagged


def test_correlation_dimension_degenerate():
    rec = E.correlation_dimension(np.full(200, 0.3), 0.0)
    assert rec.flagged
    with pytest.raises(ValueError):
        E.correlation_dimension(np.zeros(50), 0.0)


def test_correlation_sum_strict():
    pts = np.array([0.1, 0.2, 0.3])
    np.testing.assert_allclose(E.correlation_sum(pts, 0.0, [0.1, 0.2, 0.31]), [0, 1 / 3, 1])


def test_longest_window_prefers_smaller_eps_on_ties():
    # two linear runs of 5 points with a kink between them
    x = np.arange(10.0)
    y = np.r_[x[:5], 40.0 + 10.0 * x[5:]]
    i, j, slope, r2 = E.longest_linear_window(x, y, 0.999, 5)
    assert (i, j) == (0, 5)
    assert slope == pytest.approx(1.0)
    # a longer run later wins over a shorter one earlier
    y2 = np.r_[x[:4], 40.0 + 10.0 * x[4:]]
    assert E.longest_linear_window(x, y2, 0.999, 4)[:2] == (4, 10)


# ---------------------------------------------------------------- extremal index

def test_suveges_all_consecutive():
    e = E.ExceedanceIndexSeries(np.arange(100), 100)
    with pytest.warns(RuntimeWarning):
        rec = E.suveges_theta(e, 0.5)
    assert rec.flagged and rec.value == pytest.approx(1 / 100)


def test_suveges_iid_bernoulli():
    rng = make_rng(8)
    n, p = 10 ** 6, 0.01
    idx = np.flatnonzero(rng.random(n) < p)
    th = E.suveges_theta(E.ExceedanceIndexSeries(idx, n), 1 - p).value
    assert th == pytest.approx(1.0, abs=0.05)


def test_suveges_max_pair():
    _, u = E.synthetic_max_pair(10 ** 5, 1.0, make_rng(9))
    q = 0.99
    th = E.suveges_theta(E.exceedance_indices(u, q), q).value
    assert th == pytest.approx(0.5, abs=0.05)


@given(st.lists(st.integers(1, 50), min_size=2, max_size=60), st.integers(0, 1000))
def test_suveges_shift_invariance(gaps, shift):
    idx = np.cumsum(gaps)
    a = E.suveges_theta(E.ExceedanceIndexSeries(idx, int(idx[-1]) + 1), 0.9)
    b = E.suveges_theta(E.ExceedanceIndexSeries(idx + shift, int(idx[-1]) + shift + 1), 0.9)
    assert a.value == b.value
    assert 0.0 < a.value <= 1.0


def test_exceedance_series_validation():
    with pytest.raises(ValueError):
        E.ExceedanceIndexSeries([3, 2], 10)
    with pytest.raises(ValueError):
        E.ExceedanceIndexSeries([0, 10], 10)


def test_mean_cluster_time():
    assert E.mean_cluster_time(1.0, 0.0198) == 0.0198
    assert E.mean_cluster_time(0.5, 0.01) == pytest.approx(0.02)
    with pytest.raises(ValueError):
        E.mean_cluster_time(0.0, 0.01)


def test_cluster_time_fixed_length_clusters():
    # clusters of L consecutive exceedances spread far apart
    L, dt, n = 4, 0.01, 10 ** 6
    starts = np.arange(1000, n - 10, 5000)
    idx = np.sort(np.concatenate([starts + j for j in range(L)]))
    p = idx.size / n
    th = E.suveges_theta(E.ExceedanceIndexSeries(idx, n), 1 - p).value
    assert E.mean_cluster_time(th, dt) == pytest.approx(L * dt, rel=0.05)


# ---------------------------------------------------------------- i.i.d. and max-pair

def test_max_pair_pointwise():
    v, u = E.synthetic_max_pair(1000, 2.0, make_rng(10))
    assert np.all(u >= v)
    assert u.size == v.size == 1000
    with pytest.raises(ValueError):
        E.synthetic_max_pair(1)


def test_pot_decoupled_from_extremal_index():
    v, u = E.synthetic_max_pair(10 ** 5, 1.0, make_rng(11))
    fv = E.ebd_fit(E.threshold_excesses(v, 0.99))
    fu = E.ebd_fit(E.threshold_excesses(u, 0.99))
    assert abs(fv.value - fu.value) < 3 * math.hypot(fv.stderr, fu.stderr)


def test_varying_quantile():
    assert E.varying_quantile(10 ** 4) == pytest.approx(0.99)
