"""Hurst exponents, the eta discretisation statistic, sign autocorrelations
and the cross-instrument exponent panel."""
from __future__ import annotations

import math
import warnings
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import DegenerateVarianceError, InsufficientDataError, UndefinedEtaError
from .fit.powerlaw import fit_powerlaw

__all__ = [
    "HurstEstimate",
    "HurstEstimator",
    "hurst",
    "default_hurst_grid",
    "EtaEstimate",
    "eta",
    "SignAutocorrelation",
    "sign_autocorrelation",
    "ExponentPanel",
    "exponent_panel",
    "PANEL_EXPONENTS",
    "tape_series",
]

PANEL_EXPONENTS = ("xi", "psi", "xi_eps", "psi_eps", "H_q", "H_r", "H_eps", "H_pm")
SERIES_KINDS = ("signed_volume", "return", "order_sign", "return_sign")


@dataclass
class HurstEstimate:
    H: float
    D: float
    N_grid: np.ndarray
    mean_square: np.ndarray
    r2: float
    kind: str = ""

    def as_dict(self) -> dict:
        return {
            "H": self.H,
            "D": self.D,
            "r2": self.r2,
            "kind": self.kind,
            "N_grid": [int(n) for n in self.N_grid],
            "mean_square": [float(v) for v in self.mean_square],
        }


def default_hurst_grid(length: int) -> np.ndarray:
    """Powers of two from 4 up to ``length / 8``."""
    top = int(math.floor(math.log2(max(length, 1) / 8))) if length >= 32 else 2
    return 2 ** np.arange(2, max(top, 2) + 1)


def _segments(series) -> list[np.ndarray]:
    if isinstance(series, np.ndarray) and series.ndim == 1:
        return [series.astype(np.float64, copy=False)]
    if isinstance(series, np.ndarray) and series.ndim == 0:
        raise ValueError("series must be one-dimensional")
    parts = list(series)
    if parts and np.ndim(parts[0]) == 0:
        return [np.asarray(parts, dtype=np.float64)]
    return [np.asarray(p, dtype=np.float64).ravel() for p in parts]


def hurst(
    series,
    N_grid=None,
    kind: str = "",
    demean: bool = False,
    weighted: bool = True,
) -> HurstEstimate:
    """Hurst exponent from ``<(sum of N successive values)^2> = D N^(2H)``.

    ``series`` is one array or a list of per-day arrays; block sums never
    straddle two arrays. Sums are over non-overlapping blocks. The series is
    taken as zero-mean unless ``demean`` removes each segment's mean.

    The log-log line is fitted with weights proportional to the number of
    blocks at each ``N`` (``weighted=True``), which keeps the few, noisy
    long blocks from dominating; ``weighted=False`` gives the ordinary fit.
    """
    segs = [s for s in _segments(series) if len(s)]
    if not segs:
        raise InsufficientDataError("empty series")
    if demean:
        segs = [s - s.mean() for s in segs]
    longest = max(len(s) for s in segs)
    grid = default_hurst_grid(sum(len(s) for s in segs)) if N_grid is None else np.asarray(N_grid)
    grid = np.asarray(grid, dtype=np.int64)
    if len(grid) < 2 or np.any(np.diff(grid) <= 0) or grid[0] < 1:
        raise ValueError("N_grid must be at least two strictly increasing positive integers")
    total = sum(len(s) for s in segs)
    if total < 4 * grid[-1] or longest < grid[-1]:
        raise InsufficientDataError(
            f"series of length {total} is too short for N up to {grid[-1]} (need 4x)"
        )

    msq = np.empty(len(grid))
    blocks = np.empty(len(grid))
    for i, N in enumerate(grid):
        sq_sum, count = 0.0, 0
        for s in segs:
            m = len(s) // N
            if m == 0:
                continue
            sums = s[: m * N].reshape(m, N).sum(axis=1)
            sq_sum += float(np.dot(sums, sums))
            count += m
        msq[i] = sq_sum / count
        blocks[i] = count
    if np.any(msq <= 0) or not np.all(np.isfinite(msq)):
        raise DegenerateVarianceError("series has zero variance of block sums")

    lx, ly = np.log(grid.astype(np.float64)), np.log(msq)
    w = blocks if weighted else np.ones_like(blocks)
    X = np.column_stack([np.ones_like(lx), lx])
    sw = np.sqrt(w)
    coef = np.linalg.lstsq(X * sw[:, None], ly * sw, rcond=None)[0]
    fitted = X @ coef
    ybar = np.sum(w * ly) / w.sum()
    ss_tot = np.sum(w * (ly - ybar) ** 2)
    r2 = 1.0 - np.sum(w * (ly - fitted) ** 2) / ss_tot if ss_tot > 0 else 1.0
    return HurstEstimate(
        H=float(coef[1] / 2.0),
        D=float(math.exp(coef[0])),
        N_grid=grid,
        mean_square=msq,
        r2=float(r2),
        kind=kind,
    )


class HurstEstimator(BaseEstimator):
    """``fit(series)`` sets ``H_``, ``D_`` and ``estimate_``."""

    def __init__(self, N_grid=None, demean: bool = False, weighted: bool = True):
        self.N_grid = N_grid
        self.demean = demean
        self.weighted = weighted

    def fit(self, X, y=None):
        est = hurst(X, self.N_grid, demean=self.demean, weighted=self.weighted)
        self.estimate_ = est
        self.H_ = est.H
        self.D_ = est.D
        return self

    def predict(self, N):
        """Modelled mean square of N-sums, ``D N^(2H)``."""
        check_is_fitted(self, "estimate_")
        return self.D_ * np.asarray(N, dtype=np.float64) ** (2 * self.H_)


# ---------------------------------------------------------------- eta


@dataclass
class EtaEstimate:
    eta: float
    N_c: int
    N_a: int


def _movement_counts(mids: np.ndarray) -> tuple[int, int, int]:
    moves = np.sign(np.diff(np.asarray(mids, dtype=np.float64)))
    moves = moves[moves != 0]
    if len(moves) < 2:
        return 0, 0, len(moves)
    same = moves[1:] == moves[:-1]
    return int(same.sum()), int((~same).sum()), len(moves)


def eta(mids) -> EtaEstimate:
    """``eta = N_c / (2 N_a)`` over consecutive nonzero mid-price moves.

    ``mids`` may be one array or a list of per-day arrays (counts pooled,
    no pair spans two days).
    """
    N_c = N_a = n_moves = 0
    for seg in _segments(mids):
        c, a, k = _movement_counts(seg)
        N_c, N_a, n_moves = N_c + c, N_a + a, n_moves + k
    if n_moves < 3:
        raise InsufficientDataError(f"need at least 3 price movements, got {n_moves}")
    if N_a == 0:
        raise UndefinedEtaError("no alternating price movements (N_a = 0)")
    return EtaEstimate(N_c / (2.0 * N_a), N_c, N_a)


# ---------------------------------------------------------------- sign autocorrelation


@dataclass
class SignAutocorrelation:
    lags: np.ndarray
    acf: np.ndarray
    gamma: float | None
    amplitude: float | None
    fit_lags: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    skipped: str | None = None


def sign_autocorrelation(signs, max_lag: int, fit_points: int = 20) -> SignAutocorrelation:
    """Lagged autocorrelation of signs and the tail exponent ``gamma``.

    ``C(k) = mean((s_t - m)(s_{t+k} - m)) / var`` over the ``n - k`` available
    pairs. ``gamma`` is minus the slope of a robust power-law fit of ``C``
    over the upper half of the lag range on a log scale, that is lags from
    ``sqrt(max_lag)`` to ``max_lag``.
    """
    s = np.asarray(signs, dtype=np.float64)
    n = len(s)
    if max_lag < 2:
        raise ValueError("max_lag must be >= 2")
    if n < 10 * max_lag:
        raise InsufficientDataError(f"need at least {10 * max_lag} signs, got {n}")
    lags = np.arange(max_lag + 1)
    d = s - s.mean()
    var = float(np.dot(d, d) / n)
    if var == 0.0:
        return SignAutocorrelation(lags, np.ones(len(lags)), None, None,
                                   skipped="constant signs")
    size = 1 << int(math.ceil(math.log2(2 * n)))
    ft = np.fft.rfft(d, size)
    raw = np.fft.irfft(ft * np.conj(ft), size)[: max_lag + 1]
    acf = raw / (n - lags) / var
    acf[0] = 1.0

    fit_lags = np.unique(np.round(np.geomspace(math.sqrt(max_lag), max_lag, fit_points)).astype(np.int64))
    vals = acf[fit_lags]
    if np.any(vals <= 0):
        return SignAutocorrelation(lags, acf, None, None, fit_lags,
                                   skipped="non-positive correlations in fit range")
    law = fit_powerlaw((fit_lags.astype(np.float64), vals))
    return SignAutocorrelation(lags, acf, -law.exponent, law.amplitude, fit_lags)


# ---------------------------------------------------------------- panel


@dataclass
class ExponentPanel:
    names: tuple[str, ...]
    instruments: list[str]
    values: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    corr: np.ndarray | None
    corr_threshold: float | None
    mask: np.ndarray | None

    def as_dict(self) -> dict:
        def clean(a):
            return None if a is None else [[None if not np.isfinite(v) else float(v) for v in row]
                                           for row in np.atleast_2d(a)]
        return {
            "exponents": list(self.names),
            "instruments": list(self.instruments),
            "values": clean(self.values),
            "mean": [None if not np.isfinite(v) else float(v) for v in self.mean],
            "std": [None if not np.isfinite(v) else float(v) for v in self.std],
            "correlation": clean(self.corr),
            "correlation_threshold": self.corr_threshold,
            "significant": None if self.mask is None else self.mask.astype(bool).tolist(),
        }


def exponent_panel(
    records: Mapping[str, Sequence[Mapping[str, float]] | Mapping[str, float]],
    names: Sequence[str] = PANEL_EXPONENTS,
) -> ExponentPanel:
    """Cross-instrument summary of scaling exponents.

    ``records`` maps an instrument to one dict of exponents or a list of
    dicts, one per period; periods are averaged first. Correlations across
    instruments need at least 3 instruments. A correlation is significant
    when its Fisher transform exceeds 3 standard errors ``1/sqrt(n - 3)``,
    that is ``|rho| > tanh(3 / sqrt(n - 3))``.
    """
    names = tuple(names)
    instruments = sorted(records)
    rows = []
    for inst in instruments:
        periods = records[inst]
        if isinstance(periods, Mapping):
            periods = [periods]
        mat = np.array([[float(p.get(k, np.nan)) if p.get(k) is not None else np.nan for k in names]
                        for p in periods], dtype=np.float64)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            rows.append(np.nanmean(mat, axis=0) if len(mat) else np.full(len(names), np.nan))
    values = np.array(rows, dtype=np.float64).reshape(len(instruments), len(names))
    n = len(instruments)
    with warnings.catch_warnings():
        # all-NaN columns are expected for missing exponents
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.nanmean(values, axis=0) if n else np.full(len(names), np.nan)
        std = np.nanstd(values, axis=0, ddof=1) if n > 1 else np.full(len(names), np.nan)

    corr = threshold = mask = None
    if n >= 3:
        k = len(names)
        corr = np.full((k, k), np.nan)
        for i in range(k):
            for j in range(k):
                a, b = values[:, i], values[:, j]
                ok = np.isfinite(a) & np.isfinite(b)
                if ok.sum() < 3:
                    continue
                da, db = a[ok] - a[ok].mean(), b[ok] - b[ok].mean()
                den = math.sqrt(float(np.dot(da, da) * np.dot(db, db)))
                if den > 0:
                    corr[i, j] = float(np.clip(np.dot(da, db) / den, -1.0, 1.0))
        threshold = math.tanh(3.0 / math.sqrt(n - 3)) if n > 3 else 1.0
        with np.errstate(invalid="ignore"):
            mask = np.isfinite(corr) & (np.abs(corr) > threshold)
    return ExponentPanel(names, instruments, values, mean, std, corr, threshold, mask)


# ---------------------------------------------------------------- tape helpers


def tape_series(tapes, kind: str) -> list[np.ndarray]:
    """Per-day series for Hurst analysis, each demeaned within its day.

    ``return_sign`` keeps only trades that moved the mid.
    """
    out = []
    for tape in tapes:
        if kind == "signed_volume":
            x = tape.signed_volume
        elif kind == "return":
            x = tape.returns
        elif kind == "order_sign":
            x = tape.sign.astype(np.float64)
        elif kind == "return_sign":
            r = tape.returns
            x = np.sign(r[r != 0])
        else:
            raise ValueError(f"unknown series kind {kind!r}; expected one of {SERIES_KINDS}")
        if len(x):
            out.append(x - x.mean())
    return out
