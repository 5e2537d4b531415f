"""Trade-count windows and conditional impact statistics.

A window of ``N`` trades starting at ``t`` covers trades ``t .. t+N-1`` of a
single session and the mid-prices ``m_t .. m_{t+N}``. Windows never cross
day boundaries.
"""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import InsufficientDataError
from .tape import SessionTape

__all__ = [
    "WindowStats",
    "ImpactCurve",
    "ChangeProbCurve",
    "CCDFCurve",
    "window_stats",
    "window_stats_many",
    "WindowTransformer",
    "quantile_bin_labels",
    "impact_curve",
    "change_prob_curve",
    "ccdf",
    "IMBALANCE_KINDS",
]

IMBALANCE_KINDS = ("volume", "sign", "trade")


@dataclass
class WindowStats:
    """Column-wise statistics of all windows of one size ``N``.

    ``Q``: normalised signed volume, ``E``: sign sum over merged trades,
    ``T``: sign sum over the unmerged transactions, ``r``: log mid return,
    ``change_fraction``: share of the ``N`` consecutive mid pairs that differ.
    """

    N: int
    day: np.ndarray
    start: np.ndarray
    Q: np.ndarray
    E: np.ndarray
    T: np.ndarray
    r: np.ndarray
    change_fraction: np.ndarray

    def __len__(self) -> int:
        return len(self.start)

    def imbalance(self, kind: str) -> np.ndarray:
        if kind == "volume":
            return self.Q
        if kind == "sign":
            return self.E.astype(np.float64)
        if kind == "trade":
            return self.T.astype(np.float64)
        raise ValueError(f"unknown imbalance kind {kind!r}; expected one of {IMBALANCE_KINDS}")

    @property
    def mean_sign(self) -> np.ndarray:
        return self.E / self.N

    @classmethod
    def empty(cls, N: int) -> "WindowStats":
        z = np.zeros(0)
        zi = np.zeros(0, dtype=np.int64)
        return cls(N, zi, zi, z, zi, zi, z, z)

    @classmethod
    def concat(cls, parts: Sequence["WindowStats"], N: int) -> "WindowStats":
        if not parts:
            return cls.empty(N)
        cat = lambda name: np.concatenate([getattr(p, name) for p in parts])  # noqa: E731
        return cls(N, cat("day"), cat("start"), cat("Q"), cat("E"), cat("T"), cat("r"),
                   cat("change_fraction"))


def _window_sum_exact(x: np.ndarray, N: int) -> np.ndarray:
    # integer cumsums are exact
    c = np.concatenate(([0], np.cumsum(x, dtype=np.int64)))
    return c[N:] - c[:-N]


def window_stats(tape: SessionTape, N: int, stride: int = 1, day: int = 0) -> WindowStats:
    """Statistics of every stride-spaced window of ``N`` trades in one session.

    Returns an empty result when the session has fewer than ``N`` trades.
    """
    if N < 1 or stride < 1:
        raise ValueError("N and stride must be >= 1")
    n = len(tape)
    if n < N:
        return WindowStats.empty(N)

    starts = np.arange(0, n - N + 1, stride)
    q = tape.signed_volume
    # summing each window directly avoids cancellation from a running total
    Q = sliding_window_view(q, N).sum(axis=1)[starts]
    sign = tape.sign.astype(np.int64)
    E = _window_sum_exact(sign, N)[starts]
    T = _window_sum_exact(sign * tape.n_tx, N)[starts]
    log_mid = np.log(tape.mid)
    r = log_mid[starts + N] - log_mid[starts]
    changed = (tape.mid[1:] != tape.mid[:-1]).astype(np.int64)
    change_fraction = _window_sum_exact(changed, N)[starts] / N
    return WindowStats(
        N=N,
        day=np.full(len(starts), day, dtype=np.int64),
        start=starts.astype(np.int64),
        Q=Q,
        E=E,
        T=T,
        r=r,
        change_fraction=change_fraction,
    )


def window_stats_many(tapes: Sequence[SessionTape], N: int, stride: int = 1) -> WindowStats:
    return WindowStats.concat(
        [window_stats(t, N, stride, day=i) for i, t in enumerate(tapes)], N
    )


class WindowTransformer(TransformerMixin, BaseEstimator):
    """Map a sequence of session tapes to the :class:`WindowStats` of size ``N``."""

    def __init__(self, N: int = 1, stride: int = 1):
        self.N = N
        self.stride = stride

    def fit(self, X, y=None):
        if int(self.N) < 1 or int(self.stride) < 1:
            raise ValueError("N and stride must be >= 1")
        self.n_features_in_ = 1
        return self

    def transform(self, X) -> WindowStats:
        if isinstance(X, SessionTape):
            X = [X]
        return window_stats_many(list(X), int(self.N), int(self.stride))


# ---------------------------------------------------------------- binning


def quantile_bin_labels(x: np.ndarray, bins: int) -> tuple[np.ndarray, int]:
    """Equal-count bins that never split tied values.

    With at most ``bins`` distinct values each value gets its own bin.
    Otherwise bin boundaries sit at the value change nearest to each
    ``k * n / bins`` quantile position. Returns ``(labels, n_bins)``.
    """
    x = np.asarray(x, dtype=np.float64)
    if bins < 1:
        raise ValueError("bins must be >= 1")
    uniq, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    if len(uniq) <= bins:
        return inverse.astype(np.int64), len(uniq)
    ends = np.cumsum(counts)
    n = ends[-1]
    targets = np.arange(1, bins) * (n / bins)
    idx = np.clip(np.searchsorted(ends, targets), 0, len(ends) - 1)
    prev = np.clip(idx - 1, 0, len(ends) - 1)
    pick = np.where(np.abs(ends[prev] - targets) <= np.abs(ends[idx] - targets), prev, idx)
    boundaries = np.unique(ends[pick])
    boundaries = boundaries[boundaries < n]
    value_start = ends - counts
    group = np.searchsorted(boundaries, value_start, side="right")
    return group[inverse].astype(np.int64), len(boundaries) + 1


@dataclass
class ImpactCurve:
    """Mean return per quantile bin of an imbalance variable."""

    N: int
    kind: str
    edges: np.ndarray
    center: np.ndarray
    mean: np.ndarray
    count: np.ndarray
    stderr: np.ndarray
    imbalance_std: float = float("nan")
    return_std: float = float("nan")
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.center)


@dataclass
class ChangeProbCurve:
    N: int
    edges: np.ndarray
    center: np.ndarray
    prob: np.ndarray
    count: np.ndarray
    stderr: np.ndarray

    def __len__(self) -> int:
        return len(self.center)


@dataclass
class CCDFCurve:
    N: int
    branch: str
    x: np.ndarray
    prob: np.ndarray

    def __len__(self) -> int:
        return len(self.x)


def _binned_means(x, y, bins, min_occupancy):
    n_required = bins * min_occupancy
    if len(x) < n_required:
        raise InsufficientDataError(
            f"need at least {n_required} windows ({bins} bins x {min_occupancy}), got {len(x)}"
        )
    labels, nb = quantile_bin_labels(x, bins)
    count = np.bincount(labels, minlength=nb)
    sx = np.bincount(labels, weights=x, minlength=nb)
    sy = np.bincount(labels, weights=y, minlength=nb)
    lo = np.full(nb, np.inf)
    hi = np.full(nb, -np.inf)
    np.minimum.at(lo, labels, x)
    np.maximum.at(hi, labels, x)
    mean_y = sy / count
    # two-pass variance keeps precision for near-constant bins
    dev = y - mean_y[labels]
    ss = np.bincount(labels, weights=dev * dev, minlength=nb)
    with np.errstate(invalid="ignore", divide="ignore"):
        std = np.sqrt(ss / (count - 1))
    stderr = np.where(count > 1, std / np.sqrt(count), np.nan)
    keep = count >= min_occupancy
    edges = np.append(lo[keep], hi[keep][-1]) if keep.any() else np.zeros(0)
    return edges, (sx / count)[keep], mean_y[keep], count[keep], stderr[keep]


def impact_curve(
    stats: WindowStats, kind: str = "volume", bins: int = 31, min_occupancy: int = 50
) -> ImpactCurve:
    """Mean return conditioned on the imbalance, in tie-aware quantile bins.

    Bins holding fewer than ``min_occupancy`` windows are dropped.
    ``stderr`` is the sample standard deviation over the square root of the
    count (NaN for single-window bins).
    """
    x = stats.imbalance(kind)
    edges, center, mean, count, stderr = _binned_means(x, stats.r, bins, min_occupancy)
    return ImpactCurve(
        N=stats.N,
        kind=kind,
        edges=edges,
        center=center,
        mean=mean,
        count=count,
        stderr=stderr,
        imbalance_std=float(np.std(x)),
        return_std=float(np.std(stats.r)),
    )


def change_prob_curve(
    stats: WindowStats, bins: int = 31, min_occupancy: int = 50
) -> ChangeProbCurve:
    """Mean share of mid-changing trade pairs per bin of the mean sign E/N."""
    x = stats.mean_sign
    edges, center, prob, count, stderr = _binned_means(
        x, stats.change_fraction, bins, min_occupancy
    )
    return ChangeProbCurve(stats.N, edges, center, prob, count, stderr)


def ccdf(
    stats: WindowStats, scale: float, kind: str = "volume", n_points: int = 40
) -> tuple[CCDFCurve, CCDFCurve]:
    """Complementary CDFs of ``|imbalance| / scale``, one per sign branch.

    Each branch is normalised on its own, and evaluated as ``P(X >= x)`` on a
    log-spaced grid spanning the branch's observed range. Zero imbalances
    belong to neither branch.
    """
    if not scale > 0:
        raise ValueError("scale must be positive")
    x = stats.imbalance(kind) / scale
    out = []
    for branch, values in (("positive", x[x > 0]), ("negative", -x[x < 0])):
        if len(values) == 0:
            out.append(CCDFCurve(stats.N, branch, np.zeros(0), np.zeros(0)))
            continue
        v = np.sort(values)
        lo, hi = v[0], v[-1]
        grid = np.unique(np.geomspace(lo, hi, n_points)) if hi > lo else np.array([lo])
        grid[0], grid[-1] = lo, hi
        prob = (len(v) - np.searchsorted(v, grid, side="left")) / len(v)
        out.append(CCDFCurve(stats.N, branch, grid, prob))
    return out[0], out[1]
