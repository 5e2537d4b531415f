import math

import numpy as np
import pytest

from aggimpact.stats import hurst
from aggimpact.synth import (
    SynthConfig,
    calibrated_input_hurst,
    fgn_autocovariance,
    gen_fgn,
    gen_signs,
    gen_signs_lmf,
    gen_tape,
    gen_volumes,
    lmf_autocorrelation,
)
from aggimpact.windows import change_prob_curve, window_stats_many

# ---------------------------------------------------------------- fGn


def test_white_noise_at_half():
    n = 2**16
    x = gen_fgn(0.5, n, seed=0)
    r1 = np.corrcoef(x[:-1], x[1:])[0, 1]
    assert abs(r1) < 3 / math.sqrt(n)


def test_autocovariance_formula():
    assert fgn_autocovariance(0.5, [0, 1, 5]) == pytest.approx([1.0, 0.0, 0.0])
    k = np.array([1, 2, 3])
    H = 0.7
    ref = 0.5 * ((k + 1) ** (2 * H) - 2 * k ** (2 * H) + (k - 1) ** (2 * H))
    assert fgn_autocovariance(H, k) == pytest.approx(ref)


def test_sum_variance_scaling():
    # one long-memory path scatters by ~10% at N=4096, so average 16 paths
    H, n = 0.75, 2**20
    Ns = 2 ** np.arange(4, 13)
    acc = np.zeros(len(Ns))
    for s in range(16):
        x = gen_fgn(H, n, seed=s)
        acc += [np.mean(x.reshape(-1, N).sum(axis=1) ** 2) for N in Ns]
    assert acc / 16 == pytest.approx(Ns ** (2 * H), rel=0.05)


def test_ensemble_autocovariance():
    H, n = 0.8, 1024
    xs = np.array([gen_fgn(H, n, seed=s) for s in range(100)])
    for k, ref in zip((0, 1, 2), fgn_autocovariance(H, [0, 1, 2])):
        # per-path estimates are independent across seeds
        per_path = np.mean(xs[:, : n - k] * xs[:, k:], axis=1)
        se = per_path.std(ddof=1) / np.sqrt(len(per_path))
        assert abs(per_path.mean() - ref) < 3 * se


@pytest.mark.parametrize("H", [0.5, 0.7, 0.9])
def test_mean_bounded(H):
    n = 2**18
    assert abs(gen_fgn(H, n, seed=4).mean()) < 3 * n ** (H - 1)


def test_fgn_validation():
    with pytest.raises(ValueError):
        gen_fgn(0.7, 1000)
    with pytest.raises(ValueError):
        gen_fgn(1.0, 1024)


def test_fgn_deterministic():
    assert np.array_equal(gen_fgn(0.6, 256, seed=9), gen_fgn(0.6, 256, seed=9))
    assert not np.array_equal(gen_fgn(0.6, 256, seed=9), gen_fgn(0.6, 256, seed=10))


# ---------------------------------------------------------------- signs


def test_signs_codomain():
    s = gen_signs(0.7, 4096, seed=0)
    assert s.dtype == np.int8 and set(np.unique(s)) <= {-1, 1}


@pytest.mark.parametrize("target,tol", [(0.5, 0.03), (0.7, 0.05)])
def test_sign_hurst_target(target, tol):
    assert hurst(gen_signs(target, 2**20, seed=2).astype(float)).H == pytest.approx(target, abs=tol)


def test_calibration_endpoints():
    assert calibrated_input_hurst(0.5) == pytest.approx(0.5, abs=1e-6)
    assert 0.7 < calibrated_input_hurst(0.7) < 0.8
    with pytest.raises(ValueError):
        calibrated_input_hurst(0.97)


def test_lmf_signs():
    s = gen_signs_lmf(0.5, 2**16, seed=0)
    assert set(np.unique(s)) <= {-1, 1} and len(s) == 2**16
    assert lmf_autocorrelation(0.5, [0])[0] == 1.0
    with pytest.raises(ValueError):
        gen_signs_lmf(1.0, 10)


# ---------------------------------------------------------------- volumes


def test_volumes():
    v = gen_volumes(3.0, 10**6, seed=1)
    assert v.min() >= 1.0
    assert v.mean() == pytest.approx(1.5, rel=0.05)
    assert np.array_equal(v[:10], gen_volumes(3.0, 10, seed=1))
    # P(v > 2) = 2^-mu
    assert np.mean(v > 2) == pytest.approx(0.125, abs=0.005)
    with pytest.raises(ValueError):
        gen_volumes(1.0, 10)


# ---------------------------------------------------------------- tapes


def small(**kw):
    base = dict(n_trades=4096, n_days=2, seed=3)
    base.update(kw)
    return SynthConfig(**base)


def test_zero_strength_keeps_mid_constant():
    tapes = gen_tape(small(surprise_strength=0.0))
    for tape in tapes:
        assert np.all(tape.mid == tape.mid[0])
    c = change_prob_curve(window_stats_many(tapes, 8), bins=5, min_occupancy=50)
    assert np.all(c.prob == 0)


def test_tapes_valid_and_normalised():
    tapes = gen_tape(small())
    assert len(tapes) == 2 and all(len(t) == 4096 for t in tapes)
    totals = [t.volume.sum() for t in tapes]
    assert [t.norm_factor for t in tapes] == pytest.approx([np.mean(totals) / v for v in totals])
    assert tapes[1].date.toordinal() - tapes[0].date.toordinal() == 1
    ticks = np.round((tapes[0].mid - 0.005) / 0.01)
    assert np.allclose(tapes[0].mid, ticks * 0.01 + 0.005)


def test_deterministic_and_day_independent():
    a, b = gen_tape(small()), gen_tape(small())
    for x, y in zip(a, b):
        assert np.array_equal(x.sign, y.sign) and np.array_equal(x.mid, y.mid)
        assert np.array_equal(x.ts_ms, y.ts_ms)
    one = gen_tape(small(n_days=1))[0]
    assert np.array_equal(one.sign, a[0].sign)


def test_fixed_probability_gives_flat_curve():
    cfg = small(n_trades=16384, n_days=4, price_model="fixed_prob", surprise_strength=0.3)
    c = change_prob_curve(window_stats_many(gen_tape(cfg), 1), bins=3, min_occupancy=50)
    assert np.all(np.abs(c.prob - 0.3) < 4 * c.stderr + 0.01)


def test_lmf_sign_model():
    tapes = gen_tape(small(sign_model="lmf", lmf_gamma=0.6))
    assert all(set(np.unique(t.sign)) <= {-1, 1} for t in tapes)


@pytest.mark.parametrize("bad", [
    dict(hurst_target=0.4), dict(sign_model="x"), dict(price_model="x"), dict(volume_tail=1.0),
    dict(surprise_strength=-1.0), dict(n_trades=0), dict(tick_size=0.0),
])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        small(**bad)


def test_config_round_trip(tmp_path):
    cfg = small(hurst_target=0.65, instrument="ABC")
    path = tmp_path / "s.cfg"
    path.write_text(cfg.to_text())
    assert SynthConfig.from_file(path) == cfg
    with pytest.raises(ValueError):
        SynthConfig.from_mapping({"nonsense": "1"})
