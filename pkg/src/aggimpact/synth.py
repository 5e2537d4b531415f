"""Synthetic order flow with known ground truth.

Signs come from thresholded fractional Gaussian noise (Hurst exponent set
through a calibration table) or from an order-splitting generator with an
analytically known autocorrelation tail. Volumes are Pareto. The mid-price
moves on a tick grid, either with a fixed per-trade probability or with a
probability proportional to the sign surprise ``1 - sign * prediction``,
so that predictable flow rarely moves the price.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields
from datetime import date, time, timedelta
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.optimize import brentq
from scipy.signal import lfilter
from scipy.special import zeta

from .tape import SessionCalendar, SessionTape, normalize_daily

__all__ = [
    "SynthConfig",
    "fgn_autocovariance",
    "gen_fgn",
    "gen_signs",
    "gen_signs_lmf",
    "lmf_autocorrelation",
    "gen_volumes",
    "gen_tape",
    "sign_hurst_for_input",
    "calibrated_input_hurst",
    "build_calibration_table",
    "CALIBRATION_LENGTH",
]

CALIBRATION_LENGTH = 2**18
_CALIBRATION_FILE = "sign_hurst_calibration.csv"


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


# ---------------------------------------------------------------- fGn


def fgn_autocovariance(H: float, k) -> np.ndarray:
    """``0.5 (|k+1|^2H - 2|k|^2H + |k-1|^2H)`` for unit-variance fGn."""
    k = np.abs(np.asarray(k, dtype=np.float64))
    h2 = 2.0 * H
    return 0.5 * (np.abs(k + 1) ** h2 - 2.0 * k**h2 + np.abs(k - 1) ** h2)


@lru_cache(maxsize=16)
def _circulant_sqrt_eigs(H: float, n: int) -> np.ndarray:
    g = fgn_autocovariance(H, np.arange(n + 1))
    row = np.concatenate([g, g[-2:0:-1]])
    lam = np.fft.fft(row).real
    tol = 1e-10 * lam.max()
    if lam.min() < -tol:
        raise ValueError(
            f"circulant embedding is not non-negative for H={H}, n={n} "
            f"(min eigenvalue {lam.min():.3g})"
        )
    # eigenvalues within rounding of zero
    lam = np.where(lam < 0, 0.0, lam)
    return np.sqrt(lam / (2 * n))


def gen_fgn(H: float, n: int, seed=None) -> np.ndarray:
    """Unit-variance fractional Gaussian noise by circulant embedding (Davies-Harte).

    ``n`` must be a power of two. The sample has exactly the fGn
    autocovariance; an embedding with negative eigenvalues raises.
    """
    if not 0.0 < H < 1.0:
        raise ValueError(f"H must lie in (0, 1), got {H}")
    if n < 1 or n & (n - 1):
        raise ValueError(f"n must be a power of two, got {n}")
    rng = _rng(seed)
    if n == 1:
        return rng.standard_normal(1)
    scale = _circulant_sqrt_eigs(float(H), int(n))
    m = 2 * n
    z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    return np.fft.fft(scale * z).real[:n]


# ---------------------------------------------------------------- signs


def _next_pow2(n: int) -> int:
    return 1 << max(0, int(math.ceil(math.log2(max(n, 1)))))


def _sign_mean_square(H: float, N_max: int) -> np.ndarray:
    # exact <(sum of N thresholded-fGn signs)^2> for N = 1..N_max
    k = np.arange(1, N_max, dtype=np.float64)
    rho = (2.0 / np.pi) * np.arcsin(np.clip(fgn_autocovariance(H, k), -1.0, 1.0))
    s1 = np.concatenate([[0.0], np.cumsum(rho)])
    s2 = np.concatenate([[0.0], np.cumsum(k * rho)])
    N = np.arange(1, N_max + 1, dtype=np.float64)
    return N + 2.0 * (N * s1 - s2)


def sign_hurst_for_input(H_input: float, n: int = CALIBRATION_LENGTH) -> float:
    """Hurst exponent the estimator's default grid reports, in expectation,
    for signs of fGn with ``H_input`` and length ``n``."""
    from .stats import default_hurst_grid

    grid = default_hurst_grid(n)
    msq = _sign_mean_square(H_input, int(grid[-1]))[grid - 1]
    w = n // grid
    lx, ly = np.log(grid.astype(np.float64)), np.log(msq)
    X = np.column_stack([np.ones_like(lx), lx]) * np.sqrt(w)[:, None]
    coef = np.linalg.lstsq(X, ly * np.sqrt(w), rcond=None)[0]
    return float(coef[1] / 2.0)


def build_calibration_table(targets=None, n: int = CALIBRATION_LENGTH) -> np.ndarray:
    """Rows ``(target H, fGn input H)`` solved from the exact sign variances."""
    if targets is None:
        targets = np.round(np.arange(0.50, 0.9501, 0.01), 2)
    rows = []
    for t in targets:
        if t <= 0.5:
            rows.append((float(t), 0.5))
            continue
        h = brentq(lambda x: sign_hurst_for_input(x, n) - t, 0.5, 0.999, xtol=1e-10)
        rows.append((float(t), float(h)))
    return np.array(rows)


def write_calibration_table(path, table: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("hurst_target", "hurst_input"))
        for t, h in table:
            w.writerow((f"{t:.2f}", f"{h:.10f}"))


@lru_cache(maxsize=1)
def _calibration_table() -> np.ndarray:
    text = resources.files("aggimpact").joinpath("data", _CALIBRATION_FILE).read_text("utf-8")
    rows = list(csv.reader(text.splitlines()))[1:]
    return np.array([[float(a), float(b)] for a, b in rows])


def calibrated_input_hurst(H_target: float) -> float:
    table = _calibration_table()
    lo, hi = table[0, 0], table[-1, 0]
    if not lo <= H_target <= hi:
        raise ValueError(f"sign Hurst target must lie in [{lo}, {hi}], got {H_target}")
    return float(np.interp(H_target, table[:, 0], table[:, 1]))


def gen_signs(H_target: float, n: int, seed=None) -> np.ndarray:
    """±1 signs with measured Hurst exponent ``H_target`` (thresholded fGn)."""
    rng = _rng(seed)
    H_in = calibrated_input_hurst(H_target)
    m = _next_pow2(n)
    if H_in == 0.5:
        x = rng.standard_normal(m)
    else:
        x = gen_fgn(H_in, m, rng)
    return np.where(x[:n] >= 0.0, 1, -1).astype(np.int8)


def gen_signs_lmf(gamma: float, n: int, seed=None) -> np.ndarray:
    """Order-splitting signs: runs of one random sign with Pareto lengths.

    Run lengths satisfy ``P(L > l) = l**-(1 + gamma)`` so the sign
    autocorrelation decays as ``k**-gamma`` (see :func:`lmf_autocorrelation`).
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    rng = _rng(seed)
    a = 1.0 + gamma
    mean_len = 1.0 + float(zeta(a))
    pm = np.array([-1, 1], dtype=np.int8)
    # stationary start: the run in progress at t=0 has the residual-life law
    # P(R > r) = zeta(a, r) / E[L]
    tail = zeta(a, np.arange(1, n + 1, dtype=np.float64)) / mean_len
    first = 1 + int(np.count_nonzero(tail > rng.random()))
    chunks = [np.full(min(first, n), rng.choice(pm), dtype=np.int8)]
    total = len(chunks[0])
    while total < n:
        k = int(1.2 * (n - total) / mean_len) + 16
        lengths = np.ceil(rng.pareto(a, k) + 1.0).astype(np.int64)
        run = np.repeat(rng.choice(pm, size=k), np.minimum(lengths, n))
        chunks.append(run)
        total += len(run)
    return np.concatenate(chunks)[:n]


def lmf_autocorrelation(gamma: float, lags) -> np.ndarray:
    """Exact stationary autocorrelation of :func:`gen_signs_lmf` signs."""
    a = 1.0 + gamma
    k = np.asarray(lags, dtype=np.float64)
    mean_len = 1.0 + float(zeta(a))
    out = np.where(k == 0, 1.0, zeta(a, np.maximum(k, 1.0)) / mean_len)
    return out


# ---------------------------------------------------------------- volumes


def gen_volumes(mu: float, n: int, seed=None) -> np.ndarray:
    """Pareto volumes with minimum 1 and tail ``P(v > x) = x**-mu``."""
    if not mu > 1.0:
        raise ValueError(f"volume tail exponent must exceed 1 (finite mean), got {mu}")
    return _rng(seed).pareto(mu, n) + 1.0


# ---------------------------------------------------------------- tapes


@dataclass
class SynthConfig:
    n_trades: int = 16384
    n_days: int = 4
    hurst_target: float = 0.7
    sign_model: str = "fgn"
    lmf_gamma: float = 0.5
    volume_tail: float = 1.5
    price_model: str = "surprise"
    surprise_strength: float = 1.5
    predictor_memory: float = 64.0
    predictor_gain: float = 5.0
    tick_size: float = 0.01
    initial_mid: float = 100.0
    instrument: str = "SYN"
    start_date: date = date(2016, 1, 4)
    session_open: time = time(9, 30)
    session_close: time = time(16, 0)
    tz: str = "UTC"
    trim_minutes: float = 30.0
    seed: int = 0

    def __post_init__(self):
        if self.n_trades < 1 or self.n_days < 1:
            raise ValueError("n_trades and n_days must be >= 1")
        if self.sign_model not in ("fgn", "lmf"):
            raise ValueError(f"unknown sign model {self.sign_model!r}")
        if self.price_model not in ("surprise", "fixed_prob"):
            raise ValueError(f"unknown price model {self.price_model!r}")
        if not 0.5 <= self.hurst_target <= 0.95:
            raise ValueError("hurst_target must lie in [0.5, 0.95]")
        if not self.volume_tail > 1.0:
            raise ValueError("volume_tail must exceed 1")
        if self.surprise_strength < 0:
            raise ValueError("surprise_strength must be >= 0")
        if self.predictor_memory < 1 or self.predictor_gain <= 0:
            raise ValueError("predictor_memory must be >= 1 and predictor_gain > 0")
        if not (self.tick_size > 0 and self.initial_mid > self.tick_size):
            raise ValueError("need tick_size > 0 and initial_mid > tick_size")

    @property
    def calendar(self) -> SessionCalendar:
        return SessionCalendar(self.session_open, self.session_close, self.tz, self.trim_minutes)

    @classmethod
    def from_mapping(cls, values: dict) -> "SynthConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in kinds:
                raise ValueError(f"unknown synth config key {key!r}")
            default = getattr(cls(), key)
            kwargs[key] = _coerce(raw, default)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "SynthConfig":
        from .config import read_key_values

        return cls.from_mapping(read_key_values(path))

    def to_text(self) -> str:
        lines = []
        for key, value in asdict(self).items():
            if isinstance(value, time):
                value = value.strftime("%H:%M")
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"


def _coerce(raw, default):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, date):
        return date.fromisoformat(raw)
    if isinstance(default, time):
        return time.fromisoformat(raw)
    return raw


def _surprise_probability(sign: np.ndarray, cfg: SynthConfig) -> np.ndarray:
    s = sign.astype(np.float64)
    lam = 1.0 / cfg.predictor_memory
    ewma = lfilter([lam], [1.0, -(1.0 - lam)], s)
    # prediction for trade t uses signs strictly before t
    pred = np.clip(cfg.predictor_gain * np.concatenate(([0.0], ewma[:-1])), -1.0, 1.0)
    return np.minimum(1.0, cfg.surprise_strength * np.maximum(0.0, 1.0 - s * pred))


def _gen_day(cfg: SynthConfig, day_index: int, seq: np.random.SeedSequence) -> SessionTape:
    sign_seed, vol_seed, move_seed, ts_seed = seq.spawn(4)
    n = cfg.n_trades
    if cfg.sign_model == "fgn":
        sign = gen_signs(cfg.hurst_target, n, np.random.default_rng(sign_seed))
    else:
        sign = gen_signs_lmf(cfg.lmf_gamma, n, np.random.default_rng(sign_seed))
    volume = gen_volumes(cfg.volume_tail, n, np.random.default_rng(vol_seed))

    if cfg.price_model == "surprise":
        p = _surprise_probability(sign, cfg)
    else:
        p = np.full(n, min(1.0, cfg.surprise_strength))
    moved = np.random.default_rng(move_seed).random(n) < p
    b0 = int(round(cfg.initial_mid / cfg.tick_size))
    ticks = b0 + np.concatenate(([0], np.cumsum(sign.astype(np.int64) * moved)))
    bid = ticks * cfg.tick_size
    ask = (ticks + 1) * cfg.tick_size
    mid = (bid + ask) / 2.0

    day = cfg.start_date + timedelta(days=day_index)
    lo, hi = cfg.calendar.bounds_ms(day)
    if hi - lo + 1 < n:
        raise ValueError("session too short for strictly increasing millisecond timestamps")
    offsets = np.sort(np.random.default_rng(ts_seed).choice(hi - lo + 1, size=n, replace=False))
    tape = SessionTape(
        instrument=cfg.instrument,
        date=day,
        ts_ms=lo + offsets,
        sign=sign,
        volume=volume,
        mid=mid,
        end_ts_ms=hi + 1,
    )
    tape.validate((lo, hi))
    return tape


def gen_tape(cfg: SynthConfig) -> list[SessionTape]:
    """Daily-volume normalised synthetic tapes, one per day.

    Day ``i`` draws from the ``i``-th child of ``SeedSequence(cfg.seed)``,
    so days are independent of each other and of how many are generated.
    """
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.n_days)
    tapes = [_gen_day(cfg, i, seq) for i, seq in enumerate(children)]
    return normalize_daily(tapes)


def calibration_path() -> Path:
    return Path(str(resources.files("aggimpact").joinpath("data", _CALIBRATION_FILE)))
