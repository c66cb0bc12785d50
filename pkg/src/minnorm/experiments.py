"""Risk-versus-complexity sweeps and the loss-bound audits built on model averaging."""

from __future__ import annotations

import itertools
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import synth
from .errors import InputError, NumericalError, RankDeficientError
from .features import random_ordering
from .numcore import DEFAULT_RANK_TOL
from .ols import RegressionDataset, fit_subset

log = logging.getLogger(__name__)

# slack for the nested-model checks, relative to 1 + RMS(Y)
_NESTED_SLACK = 1e-10
_INTERP_SLACK = 1e-6


@dataclass(frozen=True)
class DescentCurve:
    complexity: np.ndarray
    in_rmse: np.ndarray
    out_rmse: np.ndarray
    coef_norm: np.ndarray | None = None
    n_models: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.complexity)
        if c.ndim != 1 or c.size == 0 or np.any(np.diff(c) <= 0):
            raise InputError("curve complexities must be non-empty and strictly increasing")
        for name in ("in_rmse", "out_rmse", "coef_norm", "n_models"):
            v = getattr(self, name)
            if v is not None and np.shape(v) != c.shape:
                raise InputError(f"curve column {name} has the wrong length")

    def __len__(self):
        return len(self.complexity)


@dataclass(frozen=True)
class EvalPlan:
    m: int
    num_draws: int = 1000
    eval_seed: int = 0

    def __post_init__(self):
        if self.m < 1 or self.num_draws < 1:
            raise InputError("eval plan needs m >= 1 and num_draws >= 1")


def draw_subsets(n_eval: int, plan: EvalPlan) -> np.ndarray | None:
    """Index matrix (draws x m) of size-``m`` samples without replacement.

    ``None`` for ``m = 1``, which is scored on the full set instead.
    """
    if plan.m > n_eval:
        raise InputError(f"subset size m={plan.m} exceeds the evaluation set size {n_eval}")
    if plan.m == 1:
        return None
    rng = np.random.default_rng(plan.eval_seed)
    keys = rng.random((plan.num_draws, n_eval))
    return np.argsort(keys, axis=1, kind="stable")[:, : plan.m]


def _subset_mean_rmse(resid: np.ndarray, draws: np.ndarray | None) -> float:
    if draws is None:
        return float(np.sqrt(np.mean(resid**2)))
    return float(np.sqrt(np.mean(resid[draws].mean(axis=1) ** 2)))


def subset_mean_rmse(predictions, truths, plan: EvalPlan) -> float:
    """RMSE of mean prediction against mean truth over random size-``m`` draws.

    ``m = 1`` is the ordinary observation-level RMSE over the whole set.
    """
    p = np.asarray(predictions, dtype=float)
    y = np.asarray(truths, dtype=float)
    if p.shape != y.shape or p.ndim != 1:
        raise InputError("predictions and truths must be aligned 1-d vectors")
    return _subset_mean_rmse(p - y, draw_subsets(y.size, plan))


@dataclass
class OlsSweep:
    """Per-ordering results and the pointwise averages over orderings."""

    grid: np.ndarray
    orderings: list[np.ndarray]
    in_rmse: np.ndarray  # orderings x grid
    coef_norm: np.ndarray  # orderings x grid
    out_rmse: dict[int, np.ndarray] = field(default_factory=dict)  # m -> orderings x grid
    n_train: int = 0

    def curve(self, m: int) -> DescentCurve:
        k = len(self.orderings)
        return DescentCurve(
            complexity=self.grid,
            in_rmse=self.in_rmse.mean(axis=0),
            out_rmse=self.out_rmse[m].mean(axis=0),
            coef_norm=self.coef_norm.mean(axis=0),
            n_models=np.full(self.grid.size, k),
        )


def make_orderings(k: int, num: int, seed: int, keep_first: int = 0) -> list[np.ndarray]:
    """``num`` column orderings; the first ``keep_first`` columns stay in place."""
    if not 0 <= keep_first < k:
        raise InputError("keep_first must leave at least one column to order")
    out = []
    for o in range(num):
        tail = random_ordering(k - keep_first, [seed, o]) + keep_first
        out.append(np.concatenate([np.arange(keep_first), tail]))
    return out


def _check_grid(grid: Iterable[int], upper: int, what: str) -> np.ndarray:
    g = np.asarray(sorted(set(int(x) for x in grid)), dtype=int)
    if g.size == 0:
        raise InputError(f"{what} grid is empty")
    if g[0] < 1 or g[-1] > upper:
        raise InputError(f"{what} grid must lie in 1..{upper}, got {g[0]}..{g[-1]}")
    return g


def _ordering_sweep(train, eval_, order, grid, draws, tol):
    n = train.n
    ins = np.empty(grid.size)
    norms = np.empty(grid.size)
    outs = {m: np.empty(grid.size) for m in draws}
    for c, ell in enumerate(grid):
        try:
            fit = fit_subset(train, order[:ell], tol)
        except RankDeficientError as exc:
            raise RankDeficientError(f"complexity {ell}: {exc}") from exc
        ins[c] = fit.in_sample_rmse
        norms[c] = fit.norm
        resid = eval_.X @ fit.beta - eval_.Y
        for m, d in draws.items():
            outs[m][c] = _subset_mean_rmse(resid, d)
    scale = 1.0 + float(np.sqrt(np.mean(train.Y**2)))
    rises = np.nonzero(np.diff(ins) > _NESTED_SLACK * scale)[0]
    if rises.size:
        c = rises[0]
        raise NumericalError(
            f"in-sample RMSE rose from {ins[c]:.6g} to {ins[c + 1]:.6g} between complexities "
            f"{grid[c]} and {grid[c + 1]}; nested fits should not lose fit"
        )
    bad = (grid >= n) & (ins > _INTERP_SLACK * scale)
    if bad.any():
        raise NumericalError(f"complexity {grid[bad][0]} >= n={n} does not interpolate the training data")
    return ins, norms, outs


def ols_descent_curve(
    train: RegressionDataset,
    eval_: RegressionDataset,
    grid: Sequence[int],
    eval_plans: Sequence[EvalPlan] = (EvalPlan(1),),
    num_orderings: int = 5,
    ordering_seed: int = 0,
    keep_first: int = 0,
    threads: int = 1,
    tol: float = DEFAULT_RANK_TOL,
) -> OlsSweep:
    """Fit the first ``ell`` columns of each random ordering for every ``ell`` in ``grid``.

    The same orderings serve every ``m``, and the same eval draws serve every
    ordering and complexity. ``keep_first`` pins leading columns (an intercept)
    ahead of the shuffled ones.
    """
    if train.k != eval_.k:
        raise InputError(f"train has {train.k} columns but eval has {eval_.k}")
    g = _check_grid(grid, train.k, "complexity")
    ms = [p.m for p in eval_plans]
    if len(set(ms)) != len(ms):
        raise InputError("eval plans repeat a subset size m")
    draws = {p.m: draw_subsets(eval_.n, p) for p in eval_plans}
    orders = make_orderings(train.k, num_orderings, ordering_seed, keep_first)

    def job(order):
        return _ordering_sweep(train, eval_, order, g, draws, tol)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, orders))
    else:
        results = [job(o) for o in orders]
    sweep = OlsSweep(
        grid=g,
        orderings=orders,
        in_rmse=np.array([r[0] for r in results]),
        coef_norm=np.array([r[1] for r in results]),
        n_train=train.n,
    )
    for m in ms:
        sweep.out_rmse[m] = np.array([r[2][m] for r in results])
    return sweep


def donor_combinations(pool: Sequence[int], ell: int, cap: int, seed: int) -> list[tuple[int, ...]]:
    """All ``ell``-subsets of ``pool`` if there are at most ``cap``, else ``cap``
    distinct subsets drawn at random (generator seeded by ``(seed, ell)``)."""
    pool = tuple(pool)
    if not 1 <= ell <= len(pool):
        raise InputError(f"complexity {ell} outside 1..{len(pool)} (donor pool size)")
    if cap < 1:
        raise InputError("combination cap must be at least 1")
    if math.comb(len(pool), ell) <= cap:
        return list(itertools.combinations(pool, ell))
    rng = np.random.default_rng([seed, ell])
    seen: set[tuple[int, ...]] = set()
    out = []
    arr = np.asarray(pool)
    while len(out) < cap:
        J = tuple(int(v) for v in np.sort(rng.choice(arr, size=ell, replace=False)))
        if J not in seen:
            seen.add(J)
            out.append(J)
    return out


def _score_subset(panel: synth.Panel, J, settings):
    A = panel.pre_controls[:, J]
    try:
        sw = synth.min_norm_synth(A, panel.pre_target, settings)
    except NumericalError as exc:
        raise type(exc)(f"donor subset {J}: {exc}") from exc
    train = float(np.sqrt(np.mean((A @ sw.w - panel.pre_target) ** 2)))
    if panel.S == 0:
        return train, np.nan
    pred = panel.post_controls[:, J] @ sw.w
    return train, float(np.sqrt(np.mean((pred - panel.post_target) ** 2)))


def sc_descent_curve(
    panel: synth.Panel,
    grid: Sequence[int],
    donor_pool: Sequence[int] | None = None,
    cap: int = 10_000,
    seed: int = 0,
    settings: synth.SolverSettings = synth.SolverSettings(),
    threads: int = 1,
) -> DescentCurve:
    """Average training and out-of-time RMSE of min-norm synthetic control over
    donor subsets of each size in ``grid``. Donor indices are 0-based columns
    of ``panel.pre_controls``."""
    pool = tuple(range(panel.N)) if donor_pool is None else synth.check_donor_subset(donor_pool, panel.N)
    g = _check_grid(grid, len(pool), "complexity")
    if panel.S == 0:
        warnings.warn("panel has no post periods; out-of-time RMSE is undefined (NaN)", stacklevel=2)
    tasks = [(ell, J) for ell in g for J in donor_combinations(pool, int(ell), cap, seed)]

    def job(task):
        return _score_subset(panel, list(task[1]), settings)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            scores = list(ex.map(job, tasks, chunksize=64))
    else:
        scores = [job(t) for t in tasks]
    ins, outs, counts = [], [], []
    pos = 0
    for ell in g:
        n_sub = sum(1 for t in tasks if t[0] == ell)
        block = np.array(scores[pos : pos + n_sub])
        pos += n_sub
        ins.append(block[:, 0].mean())
        outs.append(block[:, 1].mean() if panel.S else np.nan)
        counts.append(n_sub)
    return DescentCurve(
        complexity=g, in_rmse=np.array(ins), out_rmse=np.array(outs), n_models=np.array(counts)
    )


@dataclass(frozen=True)
class JensenCheck:
    passed: bool
    slack: float  # min over points of RHS - LHS


def _weights(lam) -> np.ndarray:
    w = lam.weights if hasattr(lam, "weights") else lam
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or np.any(w < -1e-12) or abs(w.sum() - 1.0) > 1e-9:
        raise InputError("averaging weights must be a point of the simplex")
    return w


def jensen_bound_check(y, preds_simple, pred_complex, lam, atol: float = 1e-9) -> JensenCheck:
    """Squared error of the averaged model against the weighted simple-model losses.

    Works pointwise on one target (``preds_simple`` of shape ``(|J|,)``) or on
    many (shape ``(points, |J|)``). The caller must supply a complex prediction
    that actually is the ``lam``-average; otherwise the bound does not apply.
    """
    w = _weights(lam)
    F = np.atleast_2d(np.asarray(preds_simple, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    fstar = np.atleast_1d(np.asarray(pred_complex, dtype=float))
    if F.shape[1] != w.size or y.shape != fstar.shape or F.shape[0] != y.size:
        raise InputError("shapes of y, simple predictions, complex prediction and weights disagree")
    gap = np.abs(fstar - F @ w)
    if np.any(gap > 1e-8 * (1.0 + np.abs(F).max(axis=1))):
        raise InputError(
            f"complex prediction is not the weighted average of the simple ones (gap {gap.max():.3g})"
        )
    lhs = (y - fstar) ** 2
    rhs = ((y[:, None] - F) ** 2) @ w
    slack = float(np.min(rhs - lhs))
    return JensenCheck(passed=slack >= -atol, slack=slack)


@dataclass
class PermutationReport:
    mse_complex: float
    mse_permuted: np.ndarray
    mse_simple: np.ndarray
    permutations: list[tuple[int, ...]]

    @property
    def mean_permuted(self) -> float:
        return float(np.mean(self.mse_permuted))

    @property
    def mean_simple(self) -> float:
        return float(np.mean(self.mse_simple))

    @property
    def premise_slack(self) -> float:
        return self.mean_permuted - self.mse_complex

    @property
    def conclusion_slack(self) -> float:
        return self.mean_simple - self.mse_complex

    @property
    def premise_holds(self) -> bool:
        return self.premise_slack >= 0.0

    @property
    def conclusion_holds(self) -> bool:
        return self.conclusion_slack >= 0.0

    def as_dict(self) -> dict:
        return {
            "mse_complex": self.mse_complex,
            "mean_permuted_mse": self.mean_permuted,
            "mean_simple_mse": self.mean_simple,
            "n_permutations": len(self.permutations),
            "premise_holds": self.premise_holds,
            "conclusion_holds": self.conclusion_holds,
        }


def all_permutations(size: int) -> list[tuple[int, ...]]:
    return list(itertools.permutations(range(size)))


def random_permutations(size: int, count: int, seed: int) -> list[tuple[int, ...]]:
    rng = np.random.default_rng(seed)
    return [tuple(int(i) for i in rng.permutation(size)) for _ in range(count)]


def permutation_audit(y, preds_simple, lam, perms: Sequence[Sequence[int]] | None = None) -> PermutationReport:
    """Compare the averaged model with weight-shuffled versions of itself.

    ``preds_simple`` is ``(points, |J|)``. The shuffled model for ``pi`` puts
    weight ``lam[pi[j]]`` on simple model ``j``. ``perms=None`` means all
    ``|J|!`` permutations. Premise and conclusion are evaluated on the
    empirical distribution of the supplied points only.
    """
    w = _weights(lam)
    F = np.atleast_2d(np.asarray(preds_simple, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if F.shape != (y.size, w.size):
        raise InputError(f"simple predictions must be (points, {w.size}), got {F.shape}")
    if perms is None:
        perms = all_permutations(w.size)
    perms = [tuple(int(i) for i in p) for p in perms]
    for p in perms:
        if sorted(p) != list(range(w.size)):
            raise InputError(f"{p} is not a permutation of 0..{w.size - 1}")
    if not perms:
        raise InputError("no permutations given")
    mse = lambda pred: float(np.mean((y - pred) ** 2))  # noqa: E731
    return PermutationReport(
        mse_complex=mse(F @ w),
        mse_permuted=np.array([mse(F @ w[list(p)]) for p in perms]),
        mse_simple=np.array([mse(F[:, j]) for j in range(w.size)]),
        permutations=perms,
    )
