"""Dense linear-algebra kernel.

Every routine here goes through a thin SVD rather than normal equations:
near the interpolation threshold ``X_J X_J'`` is close to singular and the
normal-equation route loses half the available digits.
"""

from __future__ import annotations

import numpy as np

from .errors import InputError, RankDeficientError

DEFAULT_RANK_TOL = 1e-10


def as_matrix(A, name: str = "A") -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise InputError(f"{name} must be a non-empty 2-d array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InputError(f"{name} contains non-finite entries")
    return A


def as_vector(b, name: str = "b") -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 1:
        raise InputError(f"{name} must be 1-d, got shape {b.shape}")
    if not np.all(np.isfinite(b)):
        raise InputError(f"{name} contains non-finite entries")
    return b


def _check_tol(tol: float) -> float:
    tol = float(tol)
    if not 0.0 <= tol < 1.0:
        raise InputError(f"rank tolerance must lie in [0, 1), got {tol}")
    return tol


def thin_svd(A: np.ndarray, tol: float = DEFAULT_RANK_TOL):
    """Thin SVD truncated at ``tol * s_max``.

    Returns ``(U_r, s_r, Vt_r)`` holding only the numerically nonzero part.
    """
    tol = _check_tol(tol)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        r = 0
    else:
        r = int(np.count_nonzero(s > tol * s[0]))
    return U[:, :r], s[:r], Vt[:r]


def numerical_rank(A, tol: float = DEFAULT_RANK_TOL) -> int:
    A = as_matrix(A)
    return thin_svd(A, tol)[1].size


def min_norm_least_squares(A, b, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Minimum-Euclidean-norm minimiser of ``||A x - b||``.

    Singular values below ``tol * s_max`` are treated as zero, so the result
    is the truncated Moore-Penrose solution ``A^+ b``.
    """
    A = as_matrix(A)
    b = as_vector(b)
    if A.shape[0] != b.shape[0]:
        raise InputError(f"A has {A.shape[0]} rows but b has length {b.shape[0]}")
    U, s, Vt = thin_svd(A, tol)
    return Vt.T @ ((U.T @ b) / s)


def require_full_row_rank(A: np.ndarray, tol: float = DEFAULT_RANK_TOL, what: str = "matrix"):
    """Return the truncated SVD of ``A`` after checking rank == rows."""
    U, s, Vt = thin_svd(A, tol)
    if s.size != A.shape[0]:
        raise RankDeficientError(
            f"{what} of shape {A.shape} has numerical rank {s.size} < {A.shape[0]} rows "
            f"(rel_tol={tol:g})"
        )
    return U, s, Vt


def feature_leverages(A, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """All column leverages ``h_j = A_j' (A A')^{-1} A_j`` at once.

    With ``A = U S V'`` of full row rank, ``(A A')^{-1} = U S^{-2} U'`` and
    ``h_j`` collapses to the squared norm of row ``j`` of ``V``.
    """
    A = as_matrix(A)
    if A.shape[1] < A.shape[0]:
        raise InputError(f"leverages need cols >= rows, got shape {A.shape}")
    _, _, Vt = require_full_row_rank(A, tol)
    return np.einsum("ij,ij->j", Vt, Vt)


def feature_leverage_complements(A, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """``1 - h_j`` for every column, as squared norms of the null-space rows of ``V``.

    Summing the null-space part avoids the cancellation in ``1 - h_j`` when a
    leverage is close to one.
    """
    A = as_matrix(A)
    if A.shape[1] < A.shape[0]:
        raise InputError(f"leverages need cols >= rows, got shape {A.shape}")
    require_full_row_rank(A, tol)
    _, _, Vt = np.linalg.svd(A, full_matrices=True)
    null = Vt[A.shape[0]:]
    return np.einsum("ij,ij->j", null, null)


def feature_leverage(A, j: int, tol: float = DEFAULT_RANK_TOL) -> float:
    A = as_matrix(A)
    if not 0 <= j < A.shape[1]:
        raise InputError(f"column index {j} out of range for {A.shape[1]} columns")
    return float(feature_leverages(A, tol)[j])


def row_space_projection(A, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Orthogonal projector onto the row space of a full-row-rank ``A``."""
    A = as_matrix(A)
    _, _, Vt = require_full_row_rank(A, tol)
    P = Vt.T @ Vt
    return 0.5 * (P + P.T)


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based, exact)."""
    v = as_vector(v, "v")
    n = v.size
    if n == 0:
        raise InputError("cannot project an empty vector")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, n + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)
