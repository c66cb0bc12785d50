"""Minimum-norm interpolating regression and synthetic control.

The estimators live in :mod:`minnorm.ols` and :mod:`minnorm.synth`, the
shared linear algebra in :mod:`minnorm.numcore`, feature expansion in
:mod:`minnorm.features`, sweeps and loss-bound audits in
:mod:`minnorm.experiments`, and the randomised checks in :mod:`minnorm.verify`.
"""

from .errors import (
    ConvergenceError,
    DecompositionError,
    InputError,
    MinnormError,
    NumericalError,
    RankDeficientError,
)
from .ols import AveragingWeights, RegressionDataset, SubsetFit, averaging_weights, fit_subset
from .synth import Panel, SimplexWeights, SolverSettings, min_norm_synth, ridge_synth, simplex_lsq

__version__ = "0.1.0"

__all__ = [
    "AveragingWeights", "ConvergenceError", "DecompositionError", "InputError", "MinnormError",
    "NumericalError", "Panel", "RankDeficientError", "RegressionDataset", "SimplexWeights",
    "SolverSettings", "SubsetFit", "averaging_weights", "fit_subset", "min_norm_synth",
    "ridge_synth", "simplex_lsq",
]
