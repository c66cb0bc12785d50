"""Minimum-norm least squares on covariate subsets.

Covariate indices are 0-based throughout. A fit on subset ``J`` returns a
length-``k`` coefficient vector that is zero off ``J``. Below the
interpolation threshold (``|J| <= n``) the fit is ordinary least squares;
above it, the minimum-norm interpolant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import numcore
from .errors import InputError, RankDeficientError
from .numcore import DEFAULT_RANK_TOL

# leverages this close to one mark a column whose removal drops the row rank
_UNIT_LEVERAGE_ATOL = 1e-8


@dataclass(frozen=True)
class RegressionDataset:
    X: np.ndarray
    Y: np.ndarray
    column_names: tuple[str, ...] | None = None

    def __post_init__(self):
        X = numcore.as_matrix(self.X, "X")
        Y = numcore.as_vector(self.Y, "Y")
        if X.shape[0] != Y.shape[0]:
            raise InputError(f"X has {X.shape[0]} rows but Y has length {Y.shape[0]}")
        if self.column_names is not None and len(self.column_names) != X.shape[1]:
            raise InputError("column_names length does not match X columns")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class SubsetFit:
    beta: np.ndarray
    subset: tuple[int, ...]
    in_sample_rmse: float
    norm: float


@dataclass(frozen=True)
class AveragingWeights:
    """Convex weights over the leave-one-out submodels of ``subset``.

    ``weights[i]`` belongs to the model that drops ``subset[i]``.
    """

    subset: tuple[int, ...]
    weights: np.ndarray
    leverages: np.ndarray | None = field(default=None, compare=False)

    def as_dict(self) -> dict[int, float]:
        return {j: float(w) for j, w in zip(self.subset, self.weights)}


def check_subset(J: Sequence[int], k: int) -> tuple[int, ...]:
    J = tuple(int(j) for j in J)
    if not J:
        raise InputError("covariate subset is empty")
    if len(set(J)) != len(J):
        raise InputError(f"covariate subset has repeated indices: {J}")
    bad = [j for j in J if not 0 <= j < k]
    if bad:
        raise InputError(f"covariate indices {bad} out of range for k={k}")
    return J


def fit_subset(
    data: RegressionDataset,
    J: Sequence[int],
    tol: float = DEFAULT_RANK_TOL,
    check_rank: bool = True,
) -> SubsetFit:
    """Norm-minimising least-squares fit on the columns in ``J``.

    With ``check_rank`` the block ``X_J`` must have rank ``min(n, |J|)``
    under ``tol``; otherwise the truncated pseudoinverse solution is returned
    as is.
    """
    J = check_subset(J, data.k)
    XJ = data.X[:, J]
    U, s, Vt = numcore.thin_svd(XJ, tol)
    if check_rank and s.size != min(XJ.shape):
        raise RankDeficientError(
            f"X_J with |J|={len(J)}, n={data.n} has numerical rank {s.size} "
            f"< {min(XJ.shape)} (rel_tol={tol:g})"
        )
    bJ = Vt.T @ ((U.T @ data.Y) / s)
    beta = np.zeros(data.k)
    beta[list(J)] = bJ
    resid = data.Y - XJ @ bJ
    rmse = float(np.sqrt(resid @ resid / data.n))
    return SubsetFit(beta=beta, subset=J, in_sample_rmse=rmse, norm=float(np.linalg.norm(beta)))


def coefficient_norm(fit: SubsetFit) -> float:
    return float(np.linalg.norm(fit.beta))


def averaging_weights(
    data: RegressionDataset, J: Sequence[int], tol: float = DEFAULT_RANK_TOL
) -> AveragingWeights:
    """Leverage-based weights ``(1 - h_j) / (|J| - n)`` for ``|J| > n``.

    These depend on the design only. ``1 - h_j`` is computed from the null
    space directly, so a leverage just below one keeps its small but nonzero
    weight. A column with unit leverage gets weight zero up to round-off;
    dropping it is the only way a leave-one-out block can lose row rank, so
    that case is not an error.
    """
    J = check_subset(J, data.k)
    n = data.n
    if len(J) <= n:
        raise InputError(
            f"averaging weights need |J| > n (got |J|={len(J)}, n={n}); "
            "below the threshold the model is not an average of its submodels"
        )
    h = numcore.feature_leverages(data.X[:, J], tol)
    lam = numcore.feature_leverage_complements(data.X[:, J], tol) / (len(J) - n)
    lam = np.clip(lam, 0.0, 1.0)
    return AveragingWeights(subset=J, weights=lam, leverages=h)


def loo_fits(
    data: RegressionDataset,
    J: Sequence[int],
    tol: float = DEFAULT_RANK_TOL,
    fast: bool = False,
) -> dict[int, SubsetFit]:
    """Fits on ``J \\ {j}`` for every ``j`` in ``J`` (requires ``|J| > n``).

    ``fast`` uses the Sherman-Morrison-Woodbury downdate of the full fit,
    ``beta^{J-j} = beta^J - beta^J_j / (1 - h_j) * (e_j - Pi[:, j])``, with
    ``Pi`` the row-space projector of ``X_J``; columns with unit leverage fall
    back to a direct fit.
    """
    J = check_subset(J, data.k)
    n = data.n
    if len(J) <= n:
        raise InputError(f"leave-one-out fits here assume |J| > n (got |J|={len(J)}, n={n})")
    out: dict[int, SubsetFit] = {}
    if not fast:
        h = None
        for j in J:
            rest = [i for i in J if i != j]
            try:
                out[j] = fit_subset(data, rest, tol)
            except RankDeficientError:
                if h is None:
                    h = numcore.feature_leverages(data.X[:, J], tol)
                if abs(1.0 - h[J.index(j)]) > _UNIT_LEVERAGE_ATOL:
                    raise
                out[j] = fit_subset(data, rest, tol, check_rank=False)
        return out

    full = fit_subset(data, J, tol)
    Pi = numcore.row_space_projection(data.X[:, J], tol)
    complements = numcore.feature_leverage_complements(data.X[:, J], tol)
    bJ = full.beta[list(J)]
    for pos, j in enumerate(J):
        rest = [i for i in J if i != j]
        denom = complements[pos]
        if abs(denom) <= _UNIT_LEVERAGE_ATOL:
            out[j] = fit_subset(data, rest, tol, check_rank=False)
            continue
        step = -Pi[:, pos]
        step[pos] += 1.0
        b = bJ - (bJ[pos] / denom) * step
        b[pos] = 0.0
        beta = np.zeros(data.k)
        beta[list(J)] = b
        resid = data.Y - data.X @ beta
        out[j] = SubsetFit(
            beta=beta,
            subset=tuple(rest),
            in_sample_rmse=float(np.sqrt(resid @ resid / n)),
            norm=float(np.linalg.norm(beta)),
        )
    return out


def averaging_residual(
    data: RegressionDataset,
    J: Sequence[int],
    tol: float = DEFAULT_RANK_TOL,
    fast: bool = False,
):
    """Check ``beta^J = sum_j lambda_j beta^{J-j}``.

    Returns ``(residual, weights, full_fit, loo)`` where ``residual`` is the
    Euclidean norm of the difference.
    """
    full = fit_subset(data, J, tol)
    lam = averaging_weights(data, J, tol)
    loo = loo_fits(data, J, tol, fast=fast)
    avg = sum(w * loo[j].beta for j, w in zip(lam.subset, lam.weights))
    return float(np.linalg.norm(full.beta - avg)), lam, full, loo


def variation_distance(
    fitA: SubsetFit,
    fitB: SubsetFit,
    metric: str = "euclidean",
    X: np.ndarray | None = None,
) -> float:
    """Distance between two fits: ``||dA - dB||`` or ``||X (dA - dB)||``."""
    if fitA.beta.shape != fitB.beta.shape:
        raise InputError(f"fits differ in dimension: {fitA.beta.shape} vs {fitB.beta.shape}")
    d = fitA.beta - fitB.beta
    if metric == "euclidean":
        return float(np.linalg.norm(d))
    if metric == "design_weighted":
        if X is None:
            raise InputError("design_weighted metric needs the design matrix X")
        X = numcore.as_matrix(X, "X")
        if X.shape[1] != d.size:
            raise InputError(f"X has {X.shape[1]} columns, fits have {d.size}")
        return float(np.linalg.norm(X @ d))
    raise InputError(f"unknown metric {metric!r}")


def trace_variance_interpolating(
    X, J: Sequence[int], noise_var: float, tol: float = DEFAULT_RANK_TOL
) -> float:
    """``noise_var * tr((X_J X_J')^{-1})``: the conditional trace variance of the
    min-norm estimator under homoskedastic noise, for ``|J| > n``."""
    X = numcore.as_matrix(X, "X")
    J = check_subset(J, X.shape[1])
    if noise_var <= 0:
        raise InputError("noise_var must be positive")
    if len(J) <= X.shape[0]:
        raise InputError(f"interpolating variance needs |J| > n (got |J|={len(J)}, n={X.shape[0]})")
    _, s, _ = numcore.require_full_row_rank(X[:, J], tol, "X_J")
    return float(noise_var * np.sum(1.0 / s**2))


def monte_carlo_trace_variance(
    X,
    J: Sequence[int],
    beta_true,
    noise_var: float,
    draws: int = 100_000,
    seed: int = 0,
    tol: float = DEFAULT_RANK_TOL,
    batch: int = 20_000,
) -> float:
    """Empirical trace variance of the subset fit over redrawn outcomes
    ``Y = X beta_true + N(0, noise_var I)``."""
    X = numcore.as_matrix(X, "X")
    J = check_subset(J, X.shape[1])
    U, s, Vt = numcore.thin_svd(X[:, J], tol)
    pinv = Vt.T @ (U.T / s[:, None])
    mean_y = X @ np.asarray(beta_true, dtype=float)
    rng = np.random.default_rng(seed)
    total = np.zeros(len(J))
    total_sq = np.zeros(len(J))
    done = 0
    while done < draws:
        m = min(batch, draws - done)
        Y = mean_y + rng.normal(0.0, np.sqrt(noise_var), size=(m, X.shape[0]))
        B = Y @ pinv.T
        total += B.sum(axis=0)
        total_sq += (B**2).sum(axis=0)
        done += m
    mean = total / draws
    var = (total_sq - draws * mean**2) / (draws - 1)
    return float(var.sum())
