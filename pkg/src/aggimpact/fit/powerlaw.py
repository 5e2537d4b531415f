"""Robust power-law fits ``y = A * N**b`` via Huber IRLS in log-log space."""
from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ..exceptions import ConvergenceError

__all__ = ["PowerLawFit", "fit_powerlaw", "PowerLawRegressor", "huber_irls"]

HUBER_T = 1.345
_MAD_NORMAL = 0.6744897501960817


@dataclass
class PowerLawFit:
    amplitude: float
    exponent: float
    weights: np.ndarray
    r2: float
    stderr_log_amplitude: float
    stderr_exponent: float
    n_iter: int

    @property
    def rel_stderr_amplitude(self) -> float:
        # d(log A) ~ dA / A
        return self.stderr_log_amplitude

    @property
    def rel_stderr_exponent(self) -> float:
        return self.stderr_exponent / abs(self.exponent) if self.exponent else float("inf")

    def __call__(self, N) -> np.ndarray:
        return self.amplitude * np.asarray(N, dtype=np.float64) ** self.exponent

    def as_dict(self) -> dict:
        return {
            "amplitude": self.amplitude,
            "exponent": self.exponent,
            "r2": self.r2,
            "rel_stderr_amplitude": self.rel_stderr_amplitude,
            "rel_stderr_exponent": self.rel_stderr_exponent,
            "weights": [float(w) for w in self.weights],
            "n_iter": self.n_iter,
        }


def huber_irls(X: np.ndarray, y: np.ndarray, t: float = HUBER_T, tol: float = 1e-10,
               max_iter: int = 400):
    """Huber M-estimate of ``y ~ X @ beta`` with a MAD scale re-estimated each step.

    Returns ``(beta, weights, scale, n_iter)``.
    """
    n = len(y)
    w = np.ones(n)
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    floor = 1e-12 * (1.0 + np.max(np.abs(y)))
    scale = floor
    for it in range(1, max_iter + 1):
        resid = y - X @ beta
        # re-estimating the scale can cycle on tiny samples; after half the
        # budget it is frozen, which leaves a convex problem that converges
        if it <= max_iter // 2:
            scale = max(np.median(np.abs(resid)) / _MAD_NORMAL, floor)
        u = np.abs(resid) / scale
        w = np.where(u <= t, 1.0, t / np.maximum(u, t))
        sw = np.sqrt(w)
        new = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)[0]
        step = np.max(np.abs(new - beta))
        beta = new
        if step <= tol * (1.0 + np.max(np.abs(beta))):
            return beta, w, scale, it
    raise ConvergenceError("Huber IRLS did not converge", {"beta": beta.tolist()})


def fit_powerlaw(points, t: float = HUBER_T) -> PowerLawFit:
    """Robust log-log line through ``{N: scale}`` (or a pair of arrays).

    The exponent is the slope, the amplitude ``exp(intercept)``. Reported
    standard errors are the weighted least-squares ones at the final
    robust weights.
    """
    if isinstance(points, Mapping):
        N = np.fromiter(points.keys(), dtype=np.float64)
        s = np.fromiter(points.values(), dtype=np.float64)
    else:
        N, s = (np.asarray(a, dtype=np.float64) for a in points)
    if len(N) != len(s):
        raise ValueError("N and scale arrays differ in length")
    if len(N) < 3:
        raise ValueError(f"need at least 3 points for a power-law fit, got {len(N)}")
    if np.any(~np.isfinite(s)) or np.any(s <= 0) or np.any(N <= 0):
        raise ValueError("power-law fit needs strictly positive, finite N and scales")

    lx, ly = np.log(N), np.log(s)
    X = np.column_stack([np.ones_like(lx), lx])
    beta, w, _, n_iter = huber_irls(X, ly, t)
    resid = ly - X @ beta

    wsum = w.sum()
    ybar = np.sum(w * ly) / wsum
    ss_tot = np.sum(w * (ly - ybar) ** 2)
    ss_res = np.sum(w * resid**2)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    dof = max(len(ly) - 2, 1)
    cov = (ss_res / dof) * np.linalg.pinv(X.T @ (X * w[:, None]))
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    return PowerLawFit(
        amplitude=float(np.exp(beta[0])),
        exponent=float(beta[1]),
        weights=w,
        r2=float(r2),
        stderr_log_amplitude=float(se[0]),
        stderr_exponent=float(se[1]),
        n_iter=n_iter,
    )


class PowerLawRegressor(RegressorMixin, BaseEstimator):
    """Estimator wrapper: ``fit(N, scale)`` then ``predict(N)``."""

    def __init__(self, huber_t: float = HUBER_T):
        self.huber_t = huber_t

    def fit(self, X, y):
        N = np.asarray(X, dtype=np.float64).reshape(len(y), -1)[:, 0]
        fit = fit_powerlaw((N, np.asarray(y, dtype=np.float64)), self.huber_t)
        self.fit_ = fit
        self.amplitude_ = fit.amplitude
        self.exponent_ = fit.exponent
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        N = np.asarray(X, dtype=np.float64).reshape(-1)
        return self.fit_(N)
