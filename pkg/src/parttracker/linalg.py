"""Closed-form ridge solvers used by the filter-part pathway.

One-vs-all ridge regression with indicator targets has the solution

    C = (D^T D + lam * I_k)^(-1) D^T          (primal, k x k system)
      = D^T (D D^T + lam * I_n)^(-1)          (dual, n x n system)

where D is n x k with one descriptor per row.  The two forms agree
exactly (matrix inversion lemma), so we always factor the smaller Gram
matrix.  `ridge_weighted` solves the same problem with one positive
sample up-weighted; `rescale_factor` is the closed-form scalar q such
that the weighted solution equals q times the unweighted one, which is
what lets the bank re-weight a classifier without another solve.

Everything here is pure: no caches, no globals, float64 in and out.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import lapack

from .errors import InvalidInputError, NumericalError

SYM_RTOL = 1e-9


def _as_matrix(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def spd_solve(A, B) -> np.ndarray:
    """Solve A X = B for symmetric positive definite A via Cholesky.

    A must be symmetric within 1e-9 relative tolerance.  Raises
    NumericalError naming the failing pivot if A is not PD.
    """
    A = _as_matrix(A, "A")
    B_arr = np.asarray(B, dtype=np.float64)
    if not np.all(np.isfinite(B_arr)):
        raise InvalidInputError("B contains non-finite entries")
    b2d = B_arr.reshape(B_arr.shape[0], -1) if B_arr.ndim == 1 else B_arr
    if b2d.ndim != 2 or A.shape[0] != A.shape[1] or b2d.shape[0] != A.shape[0]:
        raise InvalidInputError(f"shape mismatch: A {A.shape}, B {B_arr.shape}")
    scale = np.abs(A).max()
    if np.abs(A - A.T).max() > SYM_RTOL * max(scale, 1.0):
        raise InvalidInputError("A is not symmetric within 1e-9 relative tolerance")

    c, info = lapack.dpotrf(A, lower=1)
    if info > 0:
        raise NumericalError(f"matrix not positive definite: pivot {info} failed")
    if info < 0:
        raise InvalidInputError(f"illegal argument {-info} to dpotrf")
    x, info = lapack.dpotrs(c, b2d, lower=1)
    if info != 0:
        raise NumericalError(f"triangular solve failed with code {info}")
    return x.reshape(B_arr.shape) if B_arr.ndim == 1 else x


def ridge_primal(D, lam: float) -> np.ndarray:
    """Classifier matrix C (k x n) from the k x k normal equations."""
    D = _as_matrix(D, "D")
    if lam <= 0:
        raise InvalidInputError(f"lam must be positive, got {lam}")
    n, k = D.shape
    G = D.T @ D
    G[np.diag_indices(k)] += lam
    return spd_solve(G, D.T)


def ridge_dual(D, lam: float) -> np.ndarray:
    """Same C as ridge_primal, via the n x n Gram matrix instead."""
    D = _as_matrix(D, "D")
    if lam <= 0:
        raise InvalidInputError(f"lam must be positive, got {lam}")
    n, k = D.shape
    G = D @ D.T
    G[np.diag_indices(n)] += lam
    # C = D^T G^{-1}: solve G Y = I, then C = D^T Y; one solve, G symmetric
    return D.T @ spd_solve(G, np.eye(n))


def ridge_solve(D, lam: float) -> np.ndarray:
    """Dispatch to whichever Gram matrix is smaller (dual when n < k)."""
    D = _as_matrix(D, "D")
    n, k = D.shape
    return ridge_dual(D, lam) if n < k else ridge_primal(D, lam)


def ridge_weighted(D, i: int, omega: float, lam: float) -> np.ndarray:
    """Ridge classifier for sample i with total positive weight omega.

    Solves (D^T D + (omega - 1) d_i d_i^T + lam I) theta = omega d_i,
    i.e. the one-vs-all problem where row i carries weight omega and all
    other rows weight 1.  omega = 1 reduces to column i of ridge_primal.
    """
    D = _as_matrix(D, "D")
    if lam <= 0:
        raise InvalidInputError(f"lam must be positive, got {lam}")
    if omega <= 0:
        raise InvalidInputError(f"omega must be positive, got {omega}")
    n, k = D.shape
    if not 0 <= i < n:
        raise InvalidInputError(f"sample index {i} out of range for n={n}")
    d = D[i]
    G = D.T @ D + (omega - 1.0) * np.outer(d, d)
    G[np.diag_indices(k)] += lam
    return spd_solve(G, omega * d)


def rescale_factor(omega: float, dot: float) -> float:
    """q = omega / (1 + (omega - 1) * dot).

    With dot = d_i^T c_i this is the exact factor mapping the unweighted
    classifier c_i onto the weighted one: theta_i = q * c_i.
    """
    if not np.isfinite(omega) or not np.isfinite(dot):
        raise InvalidInputError("omega and dot must be finite")
    denom = 1.0 + (omega - 1.0) * dot
    if abs(denom) < 1e-12:
        raise NumericalError(f"rescale denominator ~ 0 (omega={omega}, dot={dot})")
    return omega / denom
