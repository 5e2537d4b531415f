from .master import MasterCurveRegressor, MasterFit, fit_master, kappa
from .powerlaw import PowerLawFit, PowerLawRegressor, fit_powerlaw
from .scaling import ScalingParams, eval_F
from .solver import LeastSquaresResult, nonlinear_least_squares

__all__ = [
    "MasterCurveRegressor",
    "MasterFit",
    "fit_master",
    "kappa",
    "PowerLawFit",
    "PowerLawRegressor",
    "fit_powerlaw",
    "ScalingParams",
    "eval_F",
    "LeastSquaresResult",
    "nonlinear_least_squares",
]
