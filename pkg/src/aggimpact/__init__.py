"""Aggregate price impact: trade tapes, window statistics, master-curve fits."""
from .exceptions import (
    AggImpactError,
    ConvergenceError,
    DataError,
    DegenerateVarianceError,
    InsufficientDataError,
    ParseError,
    RejectedSessionError,
    UndefinedEtaError,
    UsageError,
)
from .fit import MasterCurveRegressor, MasterFit, eval_F, fit_master, fit_powerlaw, kappa
from .stats import eta, exponent_panel, hurst, sign_autocorrelation
from .synth import SynthConfig, gen_fgn, gen_signs, gen_tape, gen_volumes
from .tape import SessionCalendar, SessionTape, build_tapes, normalize_daily, parse_transactions
from .windows import ccdf, change_prob_curve, impact_curve, window_stats

__version__ = "0.1.0"

__all__ = [
    "AggImpactError",
    "ConvergenceError",
    "DataError",
    "DegenerateVarianceError",
    "InsufficientDataError",
    "ParseError",
    "RejectedSessionError",
    "UndefinedEtaError",
    "UsageError",
    "MasterCurveRegressor",
    "MasterFit",
    "eval_F",
    "fit_master",
    "fit_powerlaw",
    "kappa",
    "eta",
    "exponent_panel",
    "hurst",
    "sign_autocorrelation",
    "SynthConfig",
    "gen_fgn",
    "gen_signs",
    "gen_tape",
    "gen_volumes",
    "SessionCalendar",
    "SessionTape",
    "build_tapes",
    "normalize_daily",
    "parse_transactions",
    "ccdf",
    "change_prob_curve",
    "impact_curve",
    "window_stats",
]
