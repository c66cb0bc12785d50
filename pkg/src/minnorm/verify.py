"""Randomised verification suites for the model-averaging results.

Each suite draws its own instances from a seeded generator and returns a
:class:`SuiteResult`. Instances whose inputs violate a precondition (for
example a rank-deficient design from the adversarial generator) are recorded
as errors rather than aborting the run.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import experiments, numcore, ols, synth
from .errors import MinnormError

PROP1_RTOL = 1e-8
SIMPLEX_SUM_TOL = 1e-10
PROP2_SLACK = 1e-9
PROP3_SLACK = 1e-9
PROP4_TOL = 1e-6
MC_RTOL = 0.02
JENSEN_SLACK = 1e-9
PROP5_SLACK = 1e-12
TIEBREAK_TOL = 1e-5


@dataclass
class SuiteResult:
    name: str
    instances: int = 0
    violations: int = 0
    worst: float = 0.0  # max residual or most negative slack, see ``measure``
    measure: str = ""
    seconds: float = 0.0
    errors: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violations == 0 and not self.errors and self.instances > 0

    def as_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        d["errors"] = self.errors[:20]
        d["n_errors"] = len(self.errors)
        return d


class _Tracker:
    """Accumulates a worst-case statistic; ``mode='max'`` for residuals,
    ``'min'`` for slacks."""

    def __init__(self, result: SuiteResult, mode: str):
        self.r = result
        self.mode = mode
        self.r.worst = -np.inf if mode == "max" else np.inf

    def add(self, value: float, ok: bool):
        self.r.instances += 1
        self.r.violations += 0 if ok else 1
        self.r.worst = max(self.r.worst, value) if self.mode == "max" else min(self.r.worst, value)

    def finish(self, t0):
        if not np.isfinite(self.r.worst):
            self.r.worst = float("nan")
        self.r.worst = float(self.r.worst)
        self.r.seconds = time.perf_counter() - t0
        return self.r


def _design(rng, n, p, rank_deficient):
    X = rng.normal(size=(n, p))
    if rank_deficient and n >= 2:
        X[-1] = X[0]
    return X


def _simplex_ok(lam: np.ndarray, atol=SIMPLEX_SUM_TOL) -> bool:
    return bool(lam.min() >= 0.0 and lam.max() <= 1.0 and abs(lam.sum() - 1.0) <= atol)


@dataclass
class _Collected:
    """Evaluation-point data handed from the estimator suites to the bound suites."""

    jensen: list = field(default_factory=list)  # (y, F, fstar, lam)


def prop1_suite(count=1000, seed=0, rank_deficient=False, eval_points=8, collect: _Collected | None = None):
    """Leverage-weighted averaging identity for interpolating least squares."""
    res = SuiteResult("prop1_ols_averaging", measure="max relative identity residual")
    tr = _Tracker(res, "max")
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    fast_gap = 0.0
    for _ in range(count):
        n = int(rng.integers(1, 6))
        p = n + int(rng.integers(1, 7))
        X = _design(rng, n, p, rank_deficient)
        Y = rng.normal(size=n)
        data = ols.RegressionDataset(X, Y)
        J = tuple(range(p))
        try:
            resid, lam, full, loo = ols.averaging_residual(data, J)
            fast = ols.loo_fits(data, J, fast=True)
        except MinnormError as exc:
            res.errors.append(f"n={n}, |J|={p}: {exc}")
            continue
        gap = max(np.linalg.norm(fast[j].beta - loo[j].beta) / (1.0 + loo[j].norm) for j in J)
        fast_gap = max(fast_gap, gap)
        rel = resid / (1.0 + full.norm)
        tr.add(rel, rel <= PROP1_RTOL and gap <= PROP1_RTOL and _simplex_ok(lam.weights))
        if collect is not None:
            Xe = rng.normal(size=(eval_points, p))
            ye = rng.normal(size=eval_points)
            F = np.column_stack([Xe @ loo[j].beta for j in J])
            collect.jensen.append(("ols", ye, F, Xe @ full.beta, lam.weights))
    res.extra["max_fast_path_rel_gap"] = float(fast_gap)
    return tr.finish(t0)


def prop2_suite(count=1000, seed=0, rank_deficient=False, mc_draws=100_000):
    """Trace variance never increases when a column is added past the threshold."""
    res = SuiteResult("prop2_variance", measure="min slack (min_j tr_loo - tr_full)")
    tr = _Tracker(res, "min")
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    for _ in range(count):
        n = int(rng.integers(1, 6))
        p = n + int(rng.integers(1, 7))
        X = _design(rng, n, p, rank_deficient)
        J = list(range(p))
        try:
            full = ols.trace_variance_interpolating(X, J, 1.0)
            loos = []
            for j in J:
                rest = [i for i in J if i != j]
                if len(rest) > n:
                    loos.append(ols.trace_variance_interpolating(X, rest, 1.0))
                else:
                    # |J \ j| = n: square block, tr((X X')^-1) still defined
                    _, s, _ = numcore.require_full_row_rank(X[:, rest], what="X_J")
                    loos.append(float(np.sum(1.0 / s**2)))
        except MinnormError as exc:
            res.errors.append(f"n={n}, |J|={p}: {exc}")
            continue
        slack = min(loos) - full
        tr.add(slack, slack >= -PROP2_SLACK)
    if mc_draws:
        X = rng.normal(size=(3, 8))
        J = list(range(8))
        beta = rng.normal(size=8)
        try:
            exact = ols.trace_variance_interpolating(X, J, 1.0)
            mc = ols.monte_carlo_trace_variance(X, J, beta, 1.0, draws=mc_draws, seed=seed + 1)
            rel = abs(mc - exact) / exact
            res.extra.update(mc_exact=exact, mc_estimate=mc, mc_rel_error=rel)
            if rel > MC_RTOL:
                res.violations += 1
        except MinnormError as exc:
            res.errors.append(f"Monte-Carlo check: {exc}")
    return tr.finish(t0)


def prop3_suite(count=1000, seed=0, rank_deficient=False):
    """Variation hierarchy: below the threshold (design norm) and above it (Euclidean)."""
    res = SuiteResult("prop3_variation", measure="min slack over both branches")
    tr = _Tracker(res, "min")
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    worst = {"below": np.inf, "above": np.inf}
    for branch in ("below", "above"):
        for _ in range(count):
            n = int(rng.integers(2, 7))
            if branch == "below":
                p = int(rng.integers(2, n + 1))
            else:
                p = n + int(rng.integers(1, 7))
            X = _design(rng, n, p, rank_deficient)
            A = ols.RegressionDataset(X, rng.normal(size=n))
            B = ols.RegressionDataset(X, rng.normal(size=n))
            J = list(range(p))
            try:
                metric = "design_weighted" if branch == "below" else "euclidean"
                d_full = ols.variation_distance(ols.fit_subset(A, J), ols.fit_subset(B, J), metric, X)
                d_loo = []
                for j in J:
                    rest = [i for i in J if i != j]
                    d_loo.append(ols.variation_distance(ols.fit_subset(A, rest), ols.fit_subset(B, rest), metric, X))
            except MinnormError as exc:
                res.errors.append(f"{branch}: n={n}, |J|={p}: {exc}")
                continue
            slack = d_full - max(d_loo) if branch == "below" else min(d_loo) - d_full
            worst[branch] = min(worst[branch], slack)
            tr.add(slack, slack >= -PROP3_SLACK)
    res.extra = {f"min_slack_{k}": float(v) for k, v in worst.items()}
    return tr.finish(t0)


def _random_panel(rng, n_donors, T, S, duplicates):
    Y = rng.normal(size=(n_donors + 1, T + S))
    if duplicates and n_donors >= 2:
        Y[2] = Y[1]
    if rng.random() < 0.3:
        # target inside the donor hull: interpolating case
        mix = rng.dirichlet(np.ones(n_donors))
        Y[0] = mix @ Y[1:]
    return synth.Panel(Y, T=T, S=S)


def prop4_suite(count=500, seed=0, settings=synth.SolverSettings(), collect: _Collected | None = None):
    """Min-norm synthetic control as a convex mix of its leave-one-out fits."""
    res = SuiteResult("prop4_sc_averaging", measure="max decomposition residual")
    tr = _Tracker(res, "max")
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    n_dup = 0
    for i in range(count):
        size = int(rng.integers(2, 7))
        T = int(rng.integers(1, 5))
        dup = i % 5 == 0
        n_dup += dup
        panel = _random_panel(rng, size, T, 2, dup)
        J = list(range(size))
        try:
            full = synth.fit_donors(panel, J, settings)
            loo = synth.fit_leave_one_out(panel, J, settings)
            M = np.column_stack([loo[j].w for j in J])
            lam = synth.min_norm_synth(M, full.w, settings).w
        except MinnormError as exc:
            res.errors.append(f"|J|={size}, T={T}: {exc}")
            continue
        r = float(np.linalg.norm(M @ lam - full.w))
        tr.add(r, r <= PROP4_TOL and _simplex_ok(lam, synth.SIMPLEX_ATOL))
        if collect is not None:
            P = panel.post_controls
            F = np.column_stack([P @ loo[j].w for j in J])
            # the averaged model is the lam-mix of the simple ones; the tiny
            # decomposition residual is carried by fstar = F @ lam
            collect.jensen.append(("sc", panel.post_target, F, F @ lam, lam))
    res.extra["duplicate_donor_instances"] = n_dup
    return tr.finish(t0)


def _grid_oracle(A, y, step=1e-3, polish_iter=20000):
    """Best point of a regular simplex grid, refined by projected gradient."""
    m = A.shape[1]
    K = int(round(1.0 / step))
    if m == 1:
        W = np.ones((1, 1))
    elif m == 2:
        a = np.arange(K + 1) / K
        W = np.column_stack([a, 1.0 - a])
    else:
        i, j = np.meshgrid(np.arange(K + 1), np.arange(K + 1), indexing="ij")
        keep = i + j <= K
        a, b = i[keep] / K, j[keep] / K
        W = np.column_stack([a, b, 1.0 - a - b])
        W = np.clip(W, 0.0, None)
    R = W @ A.T - y
    w = W[int(np.argmin(np.einsum("ij,ij->i", R, R)))]
    L = 2.0 * np.linalg.norm(A, 2) ** 2
    if L > 0:
        for _ in range(polish_iter):
            g = 2.0 * A.T @ (A @ w - y)
            w_new = numcore.project_simplex(w - g / L)
            if np.max(np.abs(w_new - w)) < 1e-15:
                break
            w = w_new
    r = A @ w - y
    return w, float(r @ r)


def qp_suite(count=200, seed=0, settings=synth.SolverSettings()):
    """Simplex least squares against a brute-force grid search plus polish."""
    res = SuiteResult("qp_grid_oracle", measure="max (solver objective - oracle objective)")
    tr = _Tracker(res, "max")
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    shapes = [(m, T) for m in (1, 2, 3) for T in (1, 2, 3)]
    for i in range(count):
        m, T = shapes[i % len(shapes)]
        A = rng.normal(size=(T, m))
        if i % 3 == 0:
            y = A @ rng.dirichlet(np.ones(m))
        else:
            y = rng.normal(size=T)
        try:
            sw = synth.simplex_lsq(A, y, settings)
        except MinnormError as exc:
            res.errors.append(f"|J|={m}, T={T}: {exc}")
            continue
        _, best = _grid_oracle(A, y)
        excess = sw.objective - best
        tr.add(excess, excess <= settings.opt_tol)
    return tr.finish(t0)


def tiebreak_suite(count=50, seed=0, settings=synth.SolverSettings()):
    """Duplicated donors that fit best must share the weight evenly, and the
    ridge-path and two-stage routes must agree."""
    res = SuiteResult("min_norm_tiebreak", measure="max deviation from the uniform split / between routes")
    tr = _Tracker(res, "max")
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    for _ in range(count):
        n_dup = int(rng.integers(2, 5))
        n_other = int(rng.integers(0, 3))
        T = n_other + 2
        d = rng.normal(size=T)
        A = np.column_stack([d] * n_dup + [rng.normal(size=T) for _ in range(n_other)])
        perm = rng.permutation(A.shape[1])
        A = A[:, perm]
        dup_cols = np.nonzero(perm < n_dup)[0]
        try:
            path = synth.min_norm_synth(A, d, settings, method="path").w
            two = synth.min_norm_synth(A, d, settings, method="two_stage").w
        except MinnormError as exc:
            res.errors.append(str(exc))
            continue
        target = np.zeros(A.shape[1])
        target[dup_cols] = 1.0 / n_dup
        dev = max(float(np.max(np.abs(path - target))), float(np.max(np.abs(path - two))))
        tr.add(dev, dev <= TIEBREAK_TOL)
    return tr.finish(t0)


def jensen_suite(collected: _Collected):
    res = SuiteResult("portfolio_bound", measure="min slack over evaluation points")
    tr = _Tracker(res, "min")
    t0 = time.perf_counter()
    for src, y, F, fstar, lam in collected.jensen:
        try:
            chk = experiments.jensen_bound_check(y, F, fstar, lam, atol=JENSEN_SLACK)
        except MinnormError as exc:
            res.errors.append(f"{src}: {exc}")
            continue
        tr.add(chk.slack, chk.passed)
    res.extra["points"] = int(sum(len(c[1]) for c in collected.jensen))
    return tr.finish(t0)


def prop5_suite(collected: _Collected, max_size=5):
    """Empirical premise implies empirical conclusion under exhaustive permutations."""
    res = SuiteResult("prop5_permutation_bound", measure="min conclusion slack among premise-holding cases")
    tr = _Tracker(res, "min")
    t0 = time.perf_counter()
    premise_held = 0
    chain = np.inf
    perms_cache: dict[int, list] = {}
    for src, y, F, _, lam in collected.jensen:
        size = F.shape[1]
        if size > max_size:
            continue
        perms = perms_cache.setdefault(size, experiments.all_permutations(size))
        rep = experiments.permutation_audit(y, F, lam, perms)
        # the step the implication rests on: mean permuted MSE <= mean simple MSE
        chain = min(chain, rep.mean_simple - rep.mean_permuted)
        if rep.premise_holds:
            premise_held += 1
            tr.add(rep.conclusion_slack, rep.conclusion_slack >= -PROP5_SLACK)
    res.extra.update(premise_held=premise_held, min_jensen_chain_slack=float(chain))
    if chain < -PROP5_SLACK:
        res.violations += 1
    return tr.finish(t0)


@dataclass
class VerifyPlan:
    seed: int = 0
    prop1: int = 1000
    prop2: int = 1000
    prop3: int = 1000
    prop4: int = 500
    qp: int = 200
    tiebreak: int = 50
    mc_draws: int = 100_000
    rank_deficient: bool = False


def run_all(plan: VerifyPlan = VerifyPlan(), settings=synth.SolverSettings()) -> list[SuiteResult]:
    seeds = np.random.SeedSequence(plan.seed).generate_state(6)
    seeds = [int(s) for s in seeds]
    collected = _Collected()
    out = [
        prop1_suite(plan.prop1, seeds[0], plan.rank_deficient, collect=collected),
        prop2_suite(plan.prop2, seeds[1], plan.rank_deficient, plan.mc_draws),
        prop3_suite(plan.prop3, seeds[2], plan.rank_deficient),
        prop4_suite(plan.prop4, seeds[3], settings, collect=collected),
        qp_suite(plan.qp, seeds[4], settings),
        tiebreak_suite(plan.tiebreak, seeds[5], settings),
    ]
    out.append(jensen_suite(collected))
    out.append(prop5_suite(collected))
    return out


def report(results: list[SuiteResult]) -> dict:
    return {
        "passed": all(r.passed for r in results),
        "suites": [r.as_dict() for r in results],
    }


def format_report(results: list[SuiteResult]) -> str:
    lines = []
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(
            f"{status}  {r.name:<26} instances={r.instances:<5} violations={r.violations:<3} "
            f"{r.measure}={r.worst:.3g}  errors={len(r.errors)}  ({r.seconds:.2f}s)"
        )
    return "\n".join(lines)

