import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from enfloc.core import DetailSignal, EnfSignal
from enfloc.errors import ConfigurationError, DegenerateSegmentError, InsufficientDataError
from enfloc.gridsim import SimConfig, simulate_enf_grid
from enfloc.signature import (
    align,
    apply_alignment,
    corrcoef,
    highpass_detail,
    pairwise_table,
    segment_starts,
    segment_tables,
    shift_frames,
)

import oracles

finite = st.floats(-0.5, 0.5, allow_nan=False, allow_subnormal=False)


def enf(values):
    # nominal 0 lets tests use small hand-made values directly
    return EnfSignal(values, nominal=0.0)


def detail(values, M=3):
    return DetailSignal(np.asarray(values, dtype=float), 1.0, M)


# --- high-pass detail ----------------------------------------------------


def test_detail_alternating_example():
    d = highpass_detail(enf([0, 1, 0, 1, 0, 1, 0]), 3)
    assert len(d) == 5
    assert np.allclose(d.values, [2 / 3, -2 / 3, 2 / 3, -2 / 3, 2 / 3], rtol=0, atol=1e-15)


def test_detail_of_constant_is_zero():
    assert not np.any(highpass_detail(enf(np.full(20, 0.7)), 5).values)


def test_detail_of_ramp_is_zero():
    d = highpass_detail(enf(0.01 * np.arange(40)), 7)
    assert np.allclose(d.values, 0.0, atol=1e-15)


def test_detail_shifts_start_time():
    e = EnfSignal(np.full(10, 60.0), frame_period=2.0, start_time=10.0)
    assert highpass_detail(e, 5).start_time == 14.0


@pytest.mark.parametrize("M", [2, 1, 4, 11])
def test_detail_rejects_bad_order(M):
    with pytest.raises(ConfigurationError):
        highpass_detail(enf(np.zeros(10)), M)


@given(arrays(float, st.integers(8, 60), elements=finite), st.sampled_from([3, 5, 7]))
def test_detail_matches_exact_oracle(values, M):
    ours = highpass_detail(enf(values), M).values
    ref = np.array([float(v) for v in oracles.moving_average_residual(values, M)])
    assert np.allclose(ours, ref, rtol=0, atol=1e-15)


@given(arrays(float, st.integers(10, 60), elements=finite), st.floats(-0.4, 0.4), st.sampled_from([3, 5, 9]))
def test_detail_ignores_added_constant(values, c, M):
    a = highpass_detail(enf(values), M).values
    b = highpass_detail(enf(values + c), M).values
    assert np.allclose(a, b, rtol=0, atol=1e-14)


@given(st.floats(-0.01, 0.01), st.floats(59.5, 60.5), st.sampled_from([3, 5, 19]))
def test_detail_annihilates_affine_trends(slope, offset, M):
    values = offset + slope * np.arange(50)
    assume(np.all(np.abs(values - 60.0) <= 1.0))
    assert np.allclose(highpass_detail(EnfSignal(values), M).values, 0.0, atol=1e-12)


# --- correlation ---------------------------------------------------------


def test_corrcoef_self_and_antipodal():
    a = detail([0.3, -0.1, 0.2, -0.4, 0.05])
    assert corrcoef(a, a, 0, 5) == 1.0
    assert corrcoef(a, detail(-a.values), 0, 5) == -1.0


def test_corrcoef_orthogonal_example():
    assert corrcoef(detail([1, 0, 1, 0]), detail([0, 1, 0, 1]), 0, 4) == 0.0


def test_corrcoef_is_uncentered_by_default():
    a = detail([1.0, 2.0, 3.0])
    b = detail([3.0, 2.0, 1.0])
    assert corrcoef(a, b, 0, 3) == pytest.approx(10 / 14)
    assert corrcoef(a, b, 0, 3, centered=True) == pytest.approx(-1.0)


def test_corrcoef_zero_energy_raises():
    with pytest.raises(DegenerateSegmentError):
        corrcoef(detail([0, 0, 0, 1]), detail([1, 2, 3, 4]), 0, 3)


def test_corrcoef_segment_must_fit():
    with pytest.raises(InsufficientDataError):
        corrcoef(detail([1, 2, 3]), detail([1, 2, 3]), 2, 2)
    with pytest.raises(ConfigurationError):
        corrcoef(detail([1, 2, 3]), detail([1, 2, 3]), 0, 1)


@given(
    arrays(float, 30, elements=finite),
    arrays(float, 30, elements=finite),
    st.floats(0.01, 100) | st.floats(-100, -0.01),
    st.floats(0.01, 100) | st.floats(-100, -0.01),
)
def test_corrcoef_scale_invariance(x, y, alpha, beta):
    assume(np.dot(x, x) > 1e-6 and np.dot(y, y) > 1e-6)
    base = corrcoef(detail(x), detail(y), 0, 30)
    scaled = corrcoef(detail(alpha * x), detail(beta * y), 0, 30)
    assert scaled == pytest.approx(math.copysign(1.0, alpha * beta) * base, abs=1e-12)


@given(arrays(float, 40, elements=finite), arrays(float, 40, elements=finite), st.integers(0, 20))
def test_corrcoef_matches_oracle(x, y, start):
    N = 20
    sx, sy = x[start : start + N], y[start : start + N]
    assume(np.dot(sx, sx) > 1e-9 and np.dot(sy, sy) > 1e-9)
    ours = corrcoef(detail(x), detail(y), start, N)
    assert ours == pytest.approx(oracles.normalized_inner_product(sx, sy), rel=1e-12, abs=1e-15)
    assert -1.0 <= ours <= 1.0


# --- alignment -----------------------------------------------------------


def random_enf(n, seed):
    rng = np.random.default_rng(seed)
    return EnfSignal(60.0 + np.cumsum(rng.normal(0, 0.003, n)))


def test_align_identity():
    a = random_enf(300, 0)
    r = align(a, a, 10)
    assert r.lag_frames == 0 and r.peak_correlation == pytest.approx(1.0)


def test_align_shift_by_three():
    a = random_enf(300, 1)
    b = a.replace_values(np.concatenate([np.full(3, a.values[0]), a.values[:-3]]))
    r = align(a, b, 10)
    assert r.lag_frames == -3
    assert r.peak_correlation == pytest.approx(1.0, abs=0.01)


@given(st.integers(-20, 20), st.integers(0, 10_000))
def test_align_recovers_negated_shift(k, seed):
    a = random_enf(400, seed)
    assert align(a, shift_frames(a, k), 20).lag_frames == -k


def test_align_independent_noise_is_weak():
    rng = np.random.default_rng(3)
    a = EnfSignal(60 + rng.normal(0, 0.01, 500))
    b = EnfSignal(60 + rng.normal(0, 0.01, 500))
    r = align(a, b, 5)
    assert abs(r.lag_frames) <= 5
    assert r.weak
    assert abs(r.peak_correlation) < 0.5


def test_align_tie_prefers_small_then_negative_lag():
    # a period-2 pattern correlates perfectly at every even lag
    a = EnfSignal(60 + 0.01 * np.tile([1.0, -1.0], 50))
    assert align(a, a, 4).lag_frames == 0
    b = shift_frames(a, 1)
    assert align(a, b, 4).lag_frames == -1


def test_align_needs_overlap():
    with pytest.raises(InsufficientDataError):
        align(random_enf(30, 0), random_enf(30, 1), 25)


def test_align_rejects_mixed_frame_periods():
    a = random_enf(50, 0)
    b = EnfSignal(a.values, frame_period=2.0)
    with pytest.raises(ConfigurationError):
        align(a, b, 3)


def test_apply_alignment_trims_to_overlap():
    a = random_enf(100, 4)
    b = shift_frames(a, 5)
    lag = align(a, b, 10).lag_frames
    a2, b2 = apply_alignment(a, b, lag)
    assert lag == -5
    assert len(a2) == len(b2) == 95
    assert np.array_equal(a2.values, b2.values)


# --- tables ---------------------------------------------------------------


def test_pairwise_table_identical_series():
    d = detail(np.sin(np.arange(50.0)))
    t = pairwise_table([("a", d), ("b", d)], 0, 50)
    assert t.get("a", "b") == 1.0
    assert np.array_equal(t.rho, t.rho.T)


def test_pairwise_table_is_exactly_symmetric(five_city_series):
    details = [(n, highpass_detail(e, 3)) for n, e in five_city_series]
    t = pairwise_table(details, 0, 600)
    assert t.rho.tobytes() == t.rho.T.copy().tobytes()
    assert np.all(np.diag(t.rho) == 1.0)


def test_pairwise_table_names_the_degenerate_pair():
    ok = detail(np.sin(np.arange(20.0)))
    dead = detail(np.zeros(20))
    with pytest.raises(DegenerateSegmentError, match=r"\(a, z\)"):
        pairwise_table([("a", ok), ("z", dead)], 0, 20)


def test_pairwise_table_needs_common_time_base():
    a = DetailSignal(np.ones(20), 1.0, 3, start_time=0.0)
    b = DetailSignal(np.ones(20), 1.0, 3, start_time=5.0)
    with pytest.raises(ConfigurationError):
        pairwise_table([("a", a), ("b", b)], 0, 10)


def test_pairwise_table_workers_identical(five_city_series):
    details = [(n, highpass_detail(e, 3)) for n, e in five_city_series]
    a = pairwise_table(details, 600, 600, workers=1)
    b = pairwise_table(details, 600, 600, workers=4)
    assert a == b


def test_segment_starts_non_overlapping():
    assert segment_starts(1800, 600) == [0, 600, 1200]
    assert segment_starts(1799, 600) == [0, 600]
    assert segment_starts(10, 600) == []


def test_nearer_pair_correlates_more_in_most_segments():
    cfg = SimConfig(sites=(("A", 0, 0), ("B", 150, 0), ("C", 690, 0)), duration=4 * 3600.0, seed=3)
    details = [(n, highpass_detail(e, 3)) for n, e in simulate_enf_grid(cfg)]
    tables = segment_tables(details, 600)
    wins = [t.get("A", "B") > t.get("A", "C") for t in tables]
    assert len(tables) >= 20
    assert np.mean(wins) >= 0.95
