"""The sigmoidal master curve ``F(x) = x / (1 + |x|**alpha) ** (beta / alpha)``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["ScalingParams", "eval_F", "dF_dx", "dF_dshape"]


@dataclass(frozen=True)
class ScalingParams:
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be finite and > 0, got {self.alpha}")
        if not (np.isfinite(self.beta) and self.beta >= 0):
            raise ValueError(f"beta must be finite and >= 0, got {self.beta}")


def _log1p_pow(ax: np.ndarray, alpha: float) -> np.ndarray:
    # log(1 + |x|^alpha) without overflow for large |x|
    with np.errstate(divide="ignore"):
        la = alpha * np.log(ax)
    return np.logaddexp(0.0, la)


def eval_F(x, alpha: float, beta: float) -> np.ndarray:
    """Odd sigmoid; linear near zero and ``~ sign(x) |x|**(1 - beta)`` far out."""
    x = np.asarray(x, dtype=np.float64)
    L = _log1p_pow(np.abs(x), alpha)
    return x * np.exp(-(beta / alpha) * L)


def dF_dx(x, alpha: float, beta: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    ax = np.abs(x)
    L = _log1p_pow(ax, alpha)
    with np.errstate(divide="ignore", over="ignore"):
        frac = np.exp(alpha * np.log(ax) - L)  # |x|^a / (1 + |x|^a)
    return np.exp(-(beta / alpha) * L) * (1.0 - beta * frac)


def dF_dshape(x, alpha: float, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Partial derivatives of ``F`` with respect to ``alpha`` and ``beta``."""
    x = np.asarray(x, dtype=np.float64)
    ax = np.abs(x)
    L = _log1p_pow(ax, alpha)
    F = x * np.exp(-(beta / alpha) * L)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        frac = np.exp(alpha * np.log(ax) - L)
        frac_log = np.where(ax > 0, frac * np.log(ax), 0.0)
    dg_dalpha = -(beta / alpha**2) * L + (beta / alpha) * frac_log
    return -F * dg_dalpha, -F * L / alpha
