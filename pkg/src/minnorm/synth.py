"""Synthetic control with convex weights and minimum-norm tie-breaking.

The weight problems are small convex QPs over the probability simplex::

    minimise ||A w - y||^2 + eta ||w||^2   s.t.  w >= 0, sum(w) = 1

solved by a primal active-set method. On a working support ``S`` the
sign constraints are dropped and the equality constraint is eliminated by
writing ``w_S = 1/|S| + N z`` with ``N`` an orthonormal basis of the
sum-zero subspace. Since ``1/|S|`` is orthogonal to ``N``, minimum-norm and
ridge subproblems both reduce to an SVD solve in ``z``, which stays well
conditioned even when ``A_S`` is rank deficient (more donors than periods).

Every returned solution carries a Frank-Wolfe gap ``g'w - min(g)``, an upper
bound on its suboptimality.
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import optimize

from . import numcore
from .errors import ConvergenceError, DecompositionError, InputError
from .ols import AveragingWeights

log = logging.getLogger(__name__)

SIMPLEX_ATOL = 1e-9
_SUBPROBLEM_RANK_TOL = 1e-12
_KKT_RTOL = 64 * np.finfo(float).eps
_FACE_SLACKS = (1e-12, 1e-10, 1e-8)


@dataclass(frozen=True)
class SolverSettings:
    opt_tol: float = 1e-8
    max_iter: int = 500
    path: tuple[float, ...] = (1e-2, 1e-4, 1e-6, 1e-8)
    path_tol: float = 1e-6

    def __post_init__(self):
        path = tuple(float(e) for e in self.path)
        if not path or any(e <= 0 for e in path):
            raise InputError("ridge path values must be positive")
        if any(b >= a for a, b in zip(path, path[1:])):
            raise InputError(f"ridge path must be strictly decreasing, got {path}")
        if self.opt_tol <= 0 or self.path_tol <= 0:
            raise InputError("opt_tol and path_tol must be positive")
        if self.max_iter < 1:
            raise InputError("max_iter must be at least 1")
        object.__setattr__(self, "path", path)


@dataclass(frozen=True)
class SimplexWeights:
    """Convex weights, optionally embedded in a larger donor index space.

    ``objective`` is the unpenalised fit ``||A w - y||^2`` and ``gap`` the
    optimality certificate of the problem that produced ``w``.
    """

    w: np.ndarray
    subset: tuple[int, ...] | None = None
    objective: float = float("nan")
    gap: float = float("nan")
    method: str = ""
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        w = numcore.as_vector(self.w, "w")
        if w.size == 0:
            raise InputError("weight vector is empty")
        if w.min() < -SIMPLEX_ATOL or abs(w.sum() - 1.0) > SIMPLEX_ATOL:
            raise InputError(f"weights are not on the simplex (min={w.min():.3g}, sum={w.sum():.12g})")
        if self.subset is not None:
            off = np.ones(w.size, dtype=bool)
            off[list(self.subset)] = False
            if np.any(w[off] != 0.0):
                raise InputError("weights are nonzero outside their donor subset")
        object.__setattr__(self, "w", w)


@dataclass(frozen=True)
class Panel:
    """Outcomes with the target in row 0, donors in rows 1..N.

    The first ``T`` columns are pre-periods (fit), the remaining ``S``
    post-periods (imputation).
    """

    outcomes: np.ndarray
    T: int
    S: int = 0
    unit_names: tuple[str, ...] | None = None
    period_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        Y = numcore.as_matrix(self.outcomes, "outcomes")
        if self.T < 1 or self.S < 0:
            raise InputError(f"need T >= 1 and S >= 0, got T={self.T}, S={self.S}")
        if Y.shape[1] != self.T + self.S:
            raise InputError(f"outcomes have {Y.shape[1]} periods, expected T+S={self.T + self.S}")
        if Y.shape[0] < 2:
            raise InputError("panel needs a target and at least one donor")
        if self.unit_names is not None and len(self.unit_names) != Y.shape[0]:
            raise InputError("unit_names length does not match outcome rows")
        object.__setattr__(self, "outcomes", Y)

    @property
    def N(self) -> int:
        return self.outcomes.shape[0] - 1

    @property
    def pre_target(self) -> np.ndarray:
        return self.outcomes[0, : self.T]

    @property
    def post_target(self) -> np.ndarray:
        return self.outcomes[0, self.T :]

    @property
    def pre_controls(self) -> np.ndarray:
        return self.outcomes[1:, : self.T].T

    @property
    def post_controls(self) -> np.ndarray:
        return self.outcomes[1:, self.T :].T


@functools.lru_cache(maxsize=64)
def _sum_zero_basis(m: int) -> np.ndarray:
    # columns 2..m of the Householder reflector sending e_1 to 1/sqrt(m)
    v = np.full(m, 1.0 / np.sqrt(m))
    v[0] -= 1.0
    H = np.eye(m) - 2.0 * np.outer(v, v) / (v @ v)
    B = H[:, 1:].copy()
    B.setflags(write=False)
    return B


def _affine_solve(A_S: np.ndarray, y: np.ndarray, eta: float) -> np.ndarray:
    """Minimiser of ``||A_S w - y||^2 + eta ||w||^2`` over ``sum(w) = 1``,
    minimum-norm among ties when ``eta == 0``."""
    m = A_S.shape[1]
    if m == 1:
        return np.ones(1)
    w0 = np.full(m, 1.0 / m)
    Nb = _sum_zero_basis(m)
    B = A_S @ Nb
    r = y - A_S @ w0
    U, s, Vt = np.linalg.svd(B, full_matrices=False)
    c = U.T @ r
    if eta > 0:
        z = Vt.T @ (s / (s * s + eta) * c)
    else:
        keep = s > _SUBPROBLEM_RANK_TOL * s[0] if s.size and s[0] > 0 else np.zeros(s.size, bool)
        z = Vt[keep].T @ (c[keep] / s[keep])
    return w0 + Nb @ z


def _gradient(A, y, w, eta):
    return 2.0 * (A.T @ (A @ w - y) + eta * w)


def _fw_gap(g, w):
    return float(max(g @ w - g.min(), 0.0))


def _objective(A, y, w):
    r = A @ w - y
    return float(r @ r)


def _step_toward(w, S, z):
    """Move from ``w`` toward ``z`` until the first coordinate of ``S`` hits
    zero; returns ``(new_support, blocker, alpha)``."""
    wS = w[S]
    neg = z <= 0
    ratios = wS[neg] / (wS[neg] - z[neg])
    alpha = float(np.min(ratios))
    wS = wS + alpha * (z - wS)
    keep = wS > 1e-15
    # the blocking coordinate leaves even if roundoff kept it positive
    blocker_pos = int(np.flatnonzero(neg)[np.argmin(ratios)])
    keep[blocker_pos] = False
    newS = [i for i, k in zip(S, keep) if k]
    w[:] = 0.0
    w[newS] = wS[keep]
    return newS, S[blocker_pos], alpha


def _active_set(A, y, eta, max_iter, start_support=None):
    """Lawson-Hanson style primal active set on the simplex.

    An index that is blocked immediately after entering the working set is
    set aside until the iterate moves again, which prevents cycling on
    degenerate (tied) problems. Returns ``(w, iterations)``.
    """
    T, m = A.shape
    if m == 1:
        return np.ones(1), 0
    w = np.zeros(m)
    if start_support:
        S = sorted(start_support)
        w[S] = 1.0 / len(S)
    else:
        vert = np.sum((A - y[:, None]) ** 2, axis=0)
        S = [int(np.argmin(vert))]
        w[S[0]] = 1.0
    scale = 2.0 * (np.linalg.norm(A) * (np.linalg.norm(A) + np.linalg.norm(y)) + eta) + 1e-300
    kkt_tol = _KKT_RTOL * scale
    it = 0
    need_inner = bool(start_support)
    last_added = None
    tried: set[int] = set()
    while True:
        while need_inner:
            it += 1
            if it > max_iter:
                raise ConvergenceError(
                    f"active set exceeded max_iter={max_iter}", gap=_fw_gap(_gradient(A, y, w, eta), w)
                )
            z = _affine_solve(A[:, S], y, eta)
            if np.all(z > 0):
                w[:] = 0.0
                w[S] = z
                tried.clear()
                break
            S, blocker, alpha = _step_toward(w, S, z)
            if blocker == last_added and alpha <= 1e-15:
                tried.add(blocker)
            elif alpha > 1e-15:
                tried.clear()
            last_added = None
            w[S] /= w[S].sum()
        need_inner = True
        g = _gradient(A, y, w, eta)
        nu = g[S].mean()
        free = np.array([i for i in range(m) if i not in S and i not in tried], dtype=int)
        if free.size == 0:
            break
        i = int(free[np.argmin(g[free])])
        if g[i] - nu >= -kkt_tol:
            break
        S = sorted(S + [i])
        last_added = i
    return w, it


def _check_inputs(pre_controls, pre_target):
    A = numcore.as_matrix(pre_controls, "pre_controls")
    y = numcore.as_vector(pre_target, "pre_target")
    if A.shape[0] != y.size:
        raise InputError(f"pre_controls has {A.shape[0]} periods, pre_target {y.size}")
    return A, y


def _certify(A, y, w, eta, settings, what):
    g = _gradient(A, y, w, eta)
    gap = _fw_gap(g, w)
    limit = settings.opt_tol * max(1.0, float(y @ y))
    if gap > limit:
        raise ConvergenceError(f"{what}: optimality gap {gap:.3g} above {limit:.3g}", gap=gap)
    return gap


def simplex_lsq(pre_controls, pre_target, settings: SolverSettings = SolverSettings()) -> SimplexWeights:
    """One minimiser of ``||A w - y||^2`` over the simplex.

    The certificate is checked against ``opt_tol * max(1, ||y||^2)``.
    When several minimisers exist, which one is returned is unspecified; use
    :func:`min_norm_synth` for the tie-broken estimator.
    """
    A, y = _check_inputs(pre_controls, pre_target)
    w, it = _active_set(A, y, 0.0, settings.max_iter)
    gap = _certify(A, y, w, 0.0, settings, "simplex_lsq")
    return SimplexWeights(w=w, objective=_objective(A, y, w), gap=gap, method="active_set",
                          diagnostics={"iterations": it})


def ridge_synth(
    pre_controls, pre_target, eta: float, settings: SolverSettings = SolverSettings(), start_support=None
) -> SimplexWeights:
    """Unique minimiser of ``||A w - y||^2 + eta ||w||^2`` over the simplex."""
    A, y = _check_inputs(pre_controls, pre_target)
    if not eta > 0:
        raise InputError(f"ridge penalty must be positive, got {eta}")
    w, it = _active_set(A, y, float(eta), settings.max_iter, start_support)
    gap = _certify(A, y, w, float(eta), settings, f"ridge_synth(eta={eta:g})")
    return SimplexWeights(w=w, objective=_objective(A, y, w), gap=gap, method="ridge",
                          diagnostics={"iterations": it, "eta": float(eta)})


def _face_projection(A, target_fit, slack):
    """Minimum-norm point of ``{w in simplex : A w = target_fit}``.

    The equalities ``C w = d`` with ``C = [A; 1']`` are eliminated through
    ``w = w_p + Z u`` (``w_p`` the pseudoinverse solution, ``Z`` a null-space
    basis). Because ``w_p`` lies in the row space of ``C``,
    ``||w||^2 = ||w_p||^2 + ||u||^2`` and what remains is the least-distance
    problem ``min ||u|| s.t. Z u >= -w_p``, solved through its nonnegative least-squares dual.
    The face is often a single degenerate vertex, so nonnegativity is relaxed
    by ``slack`` and the result clipped back onto the simplex. Returns
    ``None`` when the relaxed problem is infeasible or the result leaves the face.
    """
    m = A.shape[1]
    C = np.vstack([A, np.ones((1, m))])
    d = np.append(target_fit, 1.0)
    U, s, Vt = np.linalg.svd(C, full_matrices=True)
    r = int(np.count_nonzero(s > 1e-12 * s[0]))
    w_p = Vt[:r].T @ ((U[:, :r].T @ d) / s[:r])
    Z = Vt[r:].T
    if Z.shape[1] == 0:
        w = w_p
    else:
        h = -w_p - slack
        E = np.vstack([Z.T, h[None, :]])
        f = np.zeros(E.shape[0])
        f[-1] = 1.0
        # scipy's nnls can report a zero residual on these degenerate duals; BVLS is reliable
        v = optimize.lsq_linear(E, f, bounds=(0.0, np.inf), method="bvls", tol=1e-15).x
        res = E @ v - f
        if abs(res[-1]) < 1e-14:
            return None
        w = w_p + Z @ (-res[:-1] / res[-1])
    w = np.maximum(w, 0.0)
    w = w / w.sum()
    w = _support_refit(C, d, w)
    drift = float(np.linalg.norm(A @ w - target_fit))
    if drift > 1e-9 * (1.0 + float(np.linalg.norm(target_fit))):
        return None
    return w


def _face_min_norm(A, target_fit, w_fallback):
    """:func:`_face_projection` with growing slack; ``w_fallback`` (a point
    of the face) if every attempt fails."""
    for slack in _FACE_SLACKS:
        w = _face_projection(A, target_fit, slack)
        if w is not None:
            return w
    log.debug("face projection failed at every slack; keeping the unpolished point")
    return w_fallback.copy()


def _support_refit(C, d, w):
    """Re-solve ``C w = d`` with minimum norm on the support of ``w``.

    Clipping the slack-relaxed face solution moves the fit by up to
    ``||A|| * slack``; on the correct support the exact affine solution is the
    face optimum, so use it whenever it stays nonnegative.
    """
    S = np.flatnonzero(w > 0.0)
    CS = C[:, S]
    U, s, Vt = np.linalg.svd(CS, full_matrices=False)
    keep = s > 1e-12 * s[0]
    v = Vt[keep].T @ ((U[:, keep].T @ d) / s[keep])
    if v.min() < 0.0 or np.linalg.norm(CS @ v - d) > np.linalg.norm(C @ w - d):
        return w
    out = np.zeros_like(w)
    out[S] = v
    return out / out.sum()


def _two_stage(A, y, settings):
    w1, it1 = _active_set(A, y, 0.0, settings.max_iter)
    f1 = _objective(A, y, w1)
    w2 = _face_min_norm(A, A @ w1, w1)
    f2 = _objective(A, y, w2)
    eps = 1e-9 * (1.0 + f1) * max(1.0, float(y @ y))
    if f2 > f1 + eps:
        raise ConvergenceError(f"two-stage: face solution lost fit ({f2:.6g} > {f1:.6g} + {eps:.3g})")
    return w2, {"stage1_iterations": it1}


def min_norm_synth(
    pre_controls,
    pre_target,
    settings: SolverSettings = SolverSettings(),
    method: str = "path",
) -> SimplexWeights:
    """Minimum-norm element of the simplex-constrained least-squares minimisers.

    ``method="path"`` follows the ridge solutions down ``settings.path`` and
    accepts when the last two differ by less than ``path_tol``; the result is
    then polished by projecting the origin onto the face of exact
    least-squares minimisers (weights sharing the unpenalised fitted values),
    which makes vertex solutions exact and certifies minimality of the norm. If the path
    is not Cauchy the two-stage route is used instead and the event recorded
    in ``diagnostics["path_consistent"]``.

    ``method="two_stage"`` solves the fit problem first and then the norm
    problem on its optimal face.
    """
    A, y = _check_inputs(pre_controls, pre_target)
    m = A.shape[1]
    if m == 1:
        return SimplexWeights(w=np.ones(1), objective=_objective(A, y, np.ones(1)), gap=0.0,
                              method=method, diagnostics={})
    diag: dict = {}
    if method == "two_stage":
        w, info = _two_stage(A, y, settings)
        diag.update(info)
    elif method == "path":
        prev = None
        support = None
        steps = []
        for eta in settings.path:
            w_eta, _ = _active_set(A, y, eta, settings.max_iter, support)
            support = [int(i) for i in np.flatnonzero(w_eta > 0)]
            if prev is not None:
                steps.append(float(np.linalg.norm(w_eta - prev)))
            prev = w_eta
        diag["path_steps"] = steps
        consistent = steps[-1] < settings.path_tol if steps else True
        diag["path_consistent"] = consistent
        if consistent:
            # fitted values are shared by every minimiser, so the exact
            # minimiser set is the face through the unpenalised fit
            w_fit, _ = _active_set(A, y, 0.0, settings.max_iter, support)
            w = _face_min_norm(A, A @ w_fit, w_fit)
            diag["polish_shift"] = float(np.linalg.norm(w - prev))
        else:
            log.info("ridge path not Cauchy (last step %.3g); using two-stage solution", steps[-1])
            w, info = _two_stage(A, y, settings)
            diag.update(info)
    else:
        raise InputError(f"unknown min-norm method {method!r}")
    gap = _certify(A, y, w, 0.0, settings, "min_norm_synth")
    return SimplexWeights(w=w, objective=_objective(A, y, w), gap=gap, method=method, diagnostics=diag)


def ridge_objective(pre_controls, pre_target, w, eta: float) -> float:
    A, y = _check_inputs(pre_controls, pre_target)
    w = np.asarray(w, dtype=float)
    return _objective(A, y, w) + eta * float(w @ w)


def penalized_as_unpenalized(pre_controls, pre_target, eta: float):
    """Rewrite the ridge problem as a plain least-squares one.

    Returns ``(X_tilde, y_tilde)`` with ``X_tilde = (A'A + eta I)^{1/2}`` and
    ``y_tilde = X_tilde^{-1} A'y`` such that
    ``||A w - y||^2 + eta ||w||^2 = ||X_tilde w - y_tilde||^2 - ||y_tilde||^2 + ||y||^2``.
    """
    A, y = _check_inputs(pre_controls, pre_target)
    if not eta > 0:
        raise InputError("eta must be positive")
    evals, evecs = np.linalg.eigh(A.T @ A + eta * np.eye(A.shape[1]))
    root = (evecs * np.sqrt(evals)) @ evecs.T
    y_t = np.linalg.solve(root, A.T @ y)
    return 0.5 * (root + root.T), y_t


def check_donor_subset(J: Sequence[int], N: int) -> tuple[int, ...]:
    J = tuple(int(j) for j in J)
    if not J:
        raise InputError("donor subset is empty")
    if len(set(J)) != len(J):
        raise InputError(f"donor subset has repeated indices: {J}")
    bad = [j for j in J if not 0 <= j < N]
    if bad:
        raise InputError(f"donor indices {bad} out of range for N={N}")
    return J


def _embed(local: SimplexWeights, J: tuple[int, ...], N: int) -> SimplexWeights:
    w = np.zeros(N)
    w[list(J)] = local.w
    return SimplexWeights(w=w, subset=J, objective=local.objective, gap=local.gap,
                          method=local.method, diagnostics=local.diagnostics)


def fit_donors(
    panel: Panel,
    J: Sequence[int],
    settings: SolverSettings = SolverSettings(),
    eta: float | None = None,
    method: str = "path",
) -> SimplexWeights:
    """Synthetic-control weights on donor subset ``J`` (0-based donor indices),
    returned as a length-``N`` vector.

    ``eta=None`` gives the minimum-norm estimator, a positive ``eta`` the
    ridge-penalised one.
    """
    J = check_donor_subset(J, panel.N)
    A = panel.pre_controls[:, list(J)]
    y = panel.pre_target
    if eta is None:
        local = min_norm_synth(A, y, settings, method=method)
    else:
        local = ridge_synth(A, y, eta, settings)
    return _embed(local, J, panel.N)


def fit_leave_one_out(
    panel: Panel,
    J: Sequence[int],
    settings: SolverSettings = SolverSettings(),
    eta: float | None = None,
    method: str = "path",
) -> dict[int, SimplexWeights]:
    J = check_donor_subset(J, panel.N)
    if len(J) < 2:
        raise InputError("leave-one-out fits need at least two donors")
    return {j: fit_donors(panel, [i for i in J if i != j], settings, eta, method) for j in J}


def sc_averaging_decomposition(
    full: SimplexWeights,
    loo: Mapping[int, SimplexWeights],
    tol: float = 1e-6,
    settings: SolverSettings = SolverSettings(),
) -> AveragingWeights:
    """Convex weights ``lam`` with ``w^J = sum_j lam_j w^{J-j}``.

    Solved as a simplex-constrained least-squares problem over the
    leave-one-out weight vectors, ties broken by minimum norm. Such weights
    always exist for minimum-norm (and fixed-penalty) synthetic control, so a
    residual above ``tol`` means an upstream solve is wrong and raises
    :class:`DecompositionError`.
    """
    if full.subset is None:
        raise InputError("full solution must carry its donor subset")
    J = full.subset
    if len(J) < 2:
        raise InputError("decomposition needs |J| > 1")
    missing = [j for j in J if j not in loo]
    if missing:
        raise InputError(f"missing leave-one-out solutions for donors {missing}")
    M = np.column_stack([loo[j].w for j in J])
    if M.shape[0] != full.w.size:
        raise InputError("leave-one-out weights live in a different donor space")
    lam = min_norm_synth(M, full.w, settings).w
    residual = float(np.linalg.norm(M @ lam - full.w))
    if residual > tol:
        raise DecompositionError(
            f"model-averaging decomposition residual {residual:.3g} exceeds tol {tol:.3g}",
            residual=residual,
        )
    return AveragingWeights(subset=tuple(J), weights=lam)


def decomposition_residual(full: SimplexWeights, loo: Mapping[int, SimplexWeights],
                           lam: AveragingWeights) -> float:
    M = np.column_stack([loo[j].w for j in lam.subset])
    return float(np.linalg.norm(M @ lam.weights - full.w))


def impute(weights: SimplexWeights, post_controls) -> np.ndarray:
    """Imputed target path ``post_controls @ w`` (one row per post-period)."""
    P = np.asarray(post_controls, dtype=float)
    if P.ndim != 2:
        raise InputError(f"post_controls must be 2-d, got shape {P.shape}")
    if P.shape[1] != weights.w.size:
        raise InputError(f"post_controls has {P.shape[1]} donors, weights have {weights.w.size}")
    if not np.all(np.isfinite(P)):
        raise InputError("post_controls contains non-finite entries")
    return P @ weights.w
