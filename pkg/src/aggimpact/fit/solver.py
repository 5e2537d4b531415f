"""Weighted, bounded nonlinear least squares.

Thin contract around :func:`scipy.optimize.least_squares` (trust-region
reflective): fixed stopping rules, deterministic output, and a typed error
on non-convergence.
"""
from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from ..exceptions import ConvergenceError

__all__ = ["LeastSquaresResult", "nonlinear_least_squares"]


@dataclass
class LeastSquaresResult:
    params: np.ndarray
    cost: float
    n_iter: int
    converged: bool
    message: str


def nonlinear_least_squares(
    model: Callable[[np.ndarray, np.ndarray], np.ndarray],
    x,
    y,
    init,
    weight=None,
    bounds=(-np.inf, np.inf),
    jac: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
    ftol: float = 1e-10,
    max_iter: int = 200,
    raise_on_failure: bool = True,
) -> LeastSquaresResult:
    """Minimise ``sum(weight * (y - model(x, p))**2)`` over ``p``.

    ``jac(x, p)`` returns the model Jacobian with shape ``(len(x), len(p))``;
    finite differences are used when it is omitted. Stops when the relative
    cost change drops below ``ftol`` or after ``max_iter`` evaluations.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    p0 = np.atleast_1d(np.asarray(init, dtype=np.float64))
    w = np.ones_like(y) if weight is None else np.asarray(weight, dtype=np.float64)
    if len(y) < len(p0):
        raise ValueError(f"need at least {len(p0)} data points, got {len(y)}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.all(np.isfinite(w))):
        raise ValueError("inputs must be finite")
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    sw = np.sqrt(w)

    lo, hi = bounds
    lo = np.broadcast_to(np.asarray(lo, dtype=np.float64), p0.shape)
    hi = np.broadcast_to(np.asarray(hi, dtype=np.float64), p0.shape)
    # trf needs a strictly feasible start
    span = np.where(np.isfinite(hi - lo), hi - lo, 1.0)
    p0 = np.clip(p0, lo + 1e-10 * span, hi - 1e-10 * span)

    def resid(p):
        return sw * (model(x, p) - y)

    kwargs = {}
    if jac is not None:
        kwargs["jac"] = lambda p: sw[:, None] * jac(x, p)
    res = least_squares(
        resid,
        p0,
        bounds=(lo, hi),
        method="trf",
        ftol=ftol,
        xtol=1e-12,
        gtol=1e-12,
        max_nfev=max_iter,
        x_scale="jac",
        **kwargs,
    )
    converged = res.status > 0 and np.all(np.isfinite(res.x))
    out = LeastSquaresResult(res.x, float(2.0 * res.cost), int(res.nfev), bool(converged),
                             res.message)
    if not converged and raise_on_failure:
        raise ConvergenceError(
            f"least squares did not converge: {res.message}",
            {"params": res.x.tolist(), "cost": out.cost, "n_iter": out.n_iter},
        )
    return out
