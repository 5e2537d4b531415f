from datetime import date

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aggimpact.exceptions import InsufficientDataError
from aggimpact.tape import SessionTape
from aggimpact.windows import (
    WindowStats,
    WindowTransformer,
    ccdf,
    change_prob_curve,
    impact_curve,
    quantile_bin_labels,
    window_stats,
    window_stats_many,
)

from .oracles import group_by_exact, naive_window_stats, random_tape, rel_close

DAY = date(2016, 1, 4)


def tape_from(signs, mids, volume=None, n_tx=None, norm_factor=1.0):
    n = len(signs)
    volume = np.ones(n) if volume is None else volume
    return SessionTape("X", DAY, np.arange(n), signs, volume, mids, n_tx=n_tx,
                       norm_factor=norm_factor)


def stats_from(x, r, N=4, E=None):
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    E = np.zeros(n, dtype=np.int64) if E is None else np.asarray(E)
    return WindowStats(N, np.zeros(n, dtype=np.int64), np.arange(n), x, E, E,
                       np.asarray(r, dtype=np.float64), np.zeros(n))


def test_three_trade_sign_sums():
    st_ = window_stats(tape_from([1, -1, 1], [10.0] * 4), N=2)
    assert list(st_.E) == [0, 0]


def test_single_trade_windows():
    tape = tape_from([1, -1, 1], [10.0, 10.5, 10.25, 10.5], volume=[2.0, 3.0, 4.0],
                     norm_factor=0.5)
    st_ = window_stats(tape, N=1)
    assert list(st_.Q) == [1.0, -1.5, 2.0]
    assert st_.r == pytest.approx(np.diff(np.log(tape.mid)), abs=0)


def test_n_longer_than_day_is_empty():
    st_ = window_stats(tape_from([1, 1], [10.0] * 3), N=5)
    assert len(st_) == 0 and st_.N == 5


def test_bad_window_parameters():
    with pytest.raises(ValueError):
        window_stats(tape_from([1], [10.0, 10.0]), N=0)


@pytest.mark.parametrize("stride", [1, 3])
def test_matches_brute_force(rng, stride):
    tape = random_tape(rng, 500, with_ntx=True, norm_factor=1.7)
    for N in range(1, 11):
        got = window_stats(tape, N, stride)
        ref = naive_window_stats(tape, N, stride)
        assert len(got) == len(ref)
        for i, w in enumerate(ref):
            assert got.start[i] == w["start"]
            assert rel_close(got.Q[i], w["Q"], w["Q_scale"])
            assert got.E[i] == w["E"] and got.T[i] == w["T"]
            assert got.r[i] == w["r"]
            assert got.change_fraction[i] == w["change_fraction"]


def test_trade_imbalance_counts_transactions():
    tape = tape_from([1, -1, 1], [10.0] * 4, n_tx=[3, 1, 2])
    st_ = window_stats(tape, N=3)
    assert st_.E[0] == 1 and st_.T[0] == 4


@given(st.integers(1, 60), st.integers(0, 2**32 - 1))
def test_window_invariants(N, seed):
    tape = random_tape(np.random.default_rng(seed), 80)
    st_ = window_stats(tape, N)
    assert np.all(np.abs(st_.E) <= N)
    assert np.all((st_.E - N) % 2 == 0)
    assert np.all((st_.change_fraction >= 0) & (st_.change_fraction <= 1))
    assert np.all(np.isfinite(st_.r))


def test_returns_telescope(rng):
    tape = random_tape(rng, 400)
    one = window_stats(tape, 1)
    whole = window_stats(tape, len(tape))
    assert np.sum(one.r) == pytest.approx(whole.r[0], rel=1e-12, abs=1e-15)


def test_many_days_tagged_and_never_span(rng):
    tapes = [random_tape(rng, 30), random_tape(rng, 20)]
    st_ = window_stats_many(tapes, 10)
    assert len(st_) == 21 + 11
    assert list(np.bincount(st_.day)) == [21, 11]
    assert np.all(st_.start[st_.day == 1] <= 10)


def test_transformer(rng):
    tapes = [random_tape(rng, 30)]
    out = WindowTransformer(N=4).fit_transform(tapes)
    assert len(out) == 27
    assert WindowTransformer(N=4).get_params() == {"N": 4, "stride": 1}


# ---------------------------------------------------------------- binning


def test_bins_one_per_distinct_value():
    labels, nb = quantile_bin_labels(np.array([3.0, 1.0, 1.0, 2.0]), 5)
    assert nb == 3 and list(labels) == [2, 0, 0, 1]


@given(st.lists(st.integers(-5, 5), min_size=1, max_size=300), st.integers(1, 40))
def test_bins_never_split_ties_and_are_ordered(values, bins):
    x = np.array(values, dtype=np.float64)
    labels, nb = quantile_bin_labels(x, bins)
    assert labels.min() == 0 and labels.max() == nb - 1
    for v in np.unique(x):
        assert len(np.unique(labels[x == v])) == 1
    order = np.argsort(x, kind="stable")
    assert np.all(np.diff(labels[order]) >= 0)
    assert nb <= max(bins, 1) or nb == len(np.unique(x))


def test_bins_roughly_equal_count(rng):
    labels, nb = quantile_bin_labels(rng.normal(size=3100), 31)
    counts = np.bincount(labels)
    assert nb == 31 and counts.min() >= 99 and counts.max() <= 101


# ---------------------------------------------------------------- curves


def test_zero_returns_give_zero_curve(rng):
    c = impact_curve(stats_from(rng.normal(size=2000), np.zeros(2000)), bins=10)
    assert np.all(c.mean == 0)


def test_linear_data_gives_line(rng):
    x = rng.normal(size=20000)
    c = impact_curve(stats_from(x, 0.3 * x), bins=20)
    assert c.mean == pytest.approx(0.3 * c.center, rel=1e-12)
    assert np.all(np.diff(c.center) > 0)
    assert np.all(c.count >= 50)


def test_sign_curve_equals_exact_grouping(rng):
    tape = random_tape(rng, 1000)
    st_ = window_stats(tape, 8)
    c = impact_curve(st_, "sign", bins=9, min_occupancy=1)
    ref = group_by_exact(st_.E, st_.r)
    assert list(c.center) == list(ref)
    for m, n, se, key in zip(c.mean, c.count, c.stderr, ref):
        rm, rn, rse = ref[key]
        assert n == rn
        assert rel_close(m, rm, max(abs(v) for v in st_.r[st_.E == key]))
        assert rse == pytest.approx(se, rel=1e-9) or (np.isnan(se) and np.isnan(rse))


def test_too_few_windows():
    with pytest.raises(InsufficientDataError, match="1550"):
        impact_curve(stats_from(np.arange(100.0), np.zeros(100)))


def test_sparse_bins_dropped():
    x = np.array([0.0] * 80 + [1.0] * 5 + [2.0] * 80)
    c = impact_curve(stats_from(x, x), bins=3, min_occupancy=50)
    assert list(c.center) == [0.0, 2.0]


def test_change_prob_constant_cases():
    still = window_stats(tape_from([1, -1] * 300, [10.0] * 601), 4)
    assert np.all(change_prob_curve(still, bins=5, min_occupancy=5).prob == 0)
    moving = window_stats(tape_from([1, -1] * 300, 10.0 + 0.01 * np.arange(601)), 4)
    assert np.all(change_prob_curve(moving, bins=5, min_occupancy=5).prob == 1)


def test_change_prob_within_unit_interval(rng):
    c = change_prob_curve(window_stats(random_tape(rng, 2000), 16), bins=8, min_occupancy=10)
    assert np.all((c.prob >= 0) & (c.prob <= 1))
    assert np.all(np.abs(c.center) <= 1)


def test_ccdf_unit_step():
    pos, neg = ccdf(stats_from(np.ones(10), np.zeros(10)), 1.0)
    assert list(pos.x) == [1.0] and list(pos.prob) == [1.0]
    assert len(neg) == 0


def test_ccdf_uniform_closed_form(rng):
    x = rng.uniform(0, 1, 200000)
    pos, _ = ccdf(stats_from(x, np.zeros_like(x)), 1.0)
    assert pos.prob == pytest.approx(1 - pos.x, abs=5e-3)


def test_ccdf_symmetric_branches(rng):
    y = np.abs(rng.standard_t(3, 5000)) + 1e-3
    x = np.concatenate([y, -y])
    pos, neg = ccdf(stats_from(x, np.zeros_like(x)), 1.0, n_points=30)
    assert list(pos.x) == list(neg.x) and list(pos.prob) == list(neg.prob)


@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=200))
def test_ccdf_monotone_and_normalised(values):
    x = np.array(values)
    for branch in ccdf(stats_from(x, np.zeros_like(x)), 2.0):
        if len(branch):
            assert branch.prob[0] == 1.0
            assert np.all(np.diff(branch.prob) <= 0)
            assert np.all((branch.prob > 0) & (branch.prob <= 1))


def test_ccdf_rejects_bad_scale():
    with pytest.raises(ValueError):
        ccdf(stats_from(np.ones(3), np.zeros(3)), 0.0)
