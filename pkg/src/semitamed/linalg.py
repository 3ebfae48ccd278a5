"""Small dense linear algebra used by the steppers.

Matrices and vectors are plain ``float64`` numpy arrays. Everything here is
a pure function of its inputs.
"""

from __future__ import annotations

import warnings
from typing import NamedTuple

import numpy as np
import scipy.linalg

__all__ = [
    "SingularSystem",
    "PseudoInverseError",
    "Projectors",
    "LUFactor",
    "as_matrix",
    "as_vector",
    "mat_norm_1",
    "frobenius_norm",
    "vec_norm",
    "pseudo_inverse",
    "projectors",
    "lu_factor",
    "lu_solve",
    "solve_linear",
    "DEFAULT_RANK_TOL",
    "SINGULAR_PIVOT_TOL",
    "SOLVE_TOL",
]

DEFAULT_RANK_TOL = 1e-12
# a pivot below SINGULAR_PIVOT_TOL * |M|_1 marks M as numerically singular
SINGULAR_PIVOT_TOL = 1e-12
# backward-error bound guaranteed by solve_linear
SOLVE_TOL = 1e-10


class SingularSystem(np.linalg.LinAlgError):
    """Raised when a matrix that must be invertible is numerically singular."""


class PseudoInverseError(np.linalg.LinAlgError):
    """Raised when the SVD behind a pseudo-inverse does not converge."""


def as_matrix(M, name="matrix"):
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] < 1 or M.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-d array, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def as_vector(x, name="vector"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] < 1:
        raise ValueError(f"{name} must be a non-empty 1-d array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} has non-finite entries")
    return x


def mat_norm_1(M) -> float:
    """Maximum absolute column sum."""
    M = as_matrix(M)
    return float(np.abs(M).sum(axis=0).max())


def frobenius_norm(M) -> float:
    M = as_matrix(M)
    return float(np.sqrt(np.sum(M * M)))


def vec_norm(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.sqrt(np.sum(x * x)))


def pseudo_inverse(M, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Moore-Penrose pseudo-inverse through the SVD.

    Singular values below ``rank_tol * sigma_max`` are treated as zero. For
    well separated singular values the four Penrose identities then hold with
    residuals of order ``max(rank_tol, eps) * sigma_max * |M^+|``, i.e. a small
    multiple of ``rank_tol`` relative to the problem scale.

    Parameters
    ----------
    M : array_like, shape (r, c)
    rank_tol : float
        Relative cutoff on the singular values.

    Returns
    -------
    ndarray, shape (c, r)
    """
    if not rank_tol > 0:
        raise ValueError("rank_tol must be positive")
    M = as_matrix(M)
    try:
        U, s, Vt = np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise PseudoInverseError(f"SVD did not converge: {exc}") from exc
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((M.shape[1], M.shape[0]))
    keep = s > rank_tol * s[0]
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return (Vt.T * s_inv) @ U.T


class Projectors(NamedTuple):
    P: np.ndarray
    Q: np.ndarray
    R: np.ndarray


def projectors(A, A_pinv) -> Projectors:
    """``P = A^+ A``, ``Q = I - P`` and ``R = I - A A^+``."""
    A = as_matrix(A, "A")
    A_pinv = as_matrix(A_pinv, "A_pinv")
    if A.shape[0] != A.shape[1] or A_pinv.shape != A.shape[::-1]:
        raise ValueError(f"dimension mismatch: A {A.shape}, A_pinv {A_pinv.shape}")
    eye = np.eye(A.shape[0])
    P = A_pinv @ A
    return Projectors(P=P, Q=eye - P, R=eye - A @ A_pinv)


class LUFactor(NamedTuple):
    """LAPACK-style LU factors: unit lower and upper triangle packed in ``lu``,
    ``piv[i]`` is the row swapped with row ``i`` at elimination step ``i``."""

    lu: np.ndarray
    piv: np.ndarray


def lu_factor(M, what="matrix") -> LUFactor:
    """Partial-pivoting LU with an explicit singularity test.

    Raises
    ------
    SingularSystem
        If some pivot is below ``SINGULAR_PIVOT_TOL * |M|_1``.
    """
    M = as_matrix(M, what)
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"{what} must be square, got {M.shape}")
    norm = float(np.abs(M).sum(axis=0).max())
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(M, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if norm == 0.0 or pivots.min() < SINGULAR_PIVOT_TOL * norm:
        raise SingularSystem(
            f"{what} is numerically singular (smallest pivot {pivots.min():.3e}, |M|_1 = {norm:.3e})"
        )
    return LUFactor(np.ascontiguousarray(lu), np.ascontiguousarray(piv, dtype=np.intc))


def lu_solve(factor: LUFactor, b) -> np.ndarray:
    return scipy.linalg.lu_solve((factor.lu, factor.piv), np.asarray(b, dtype=np.float64),
                                 check_finite=False)


def solve_linear(M, b) -> np.ndarray:
    """Solve ``M x = b`` for square, numerically nonsingular ``M``.

    The result satisfies ``|M x - b| <= SOLVE_TOL * (|M|_1 |x| + |b|)``.
    """
    M = as_matrix(M, "M")
    b = as_vector(b, "b")
    if b.shape[0] != M.shape[0]:
        raise ValueError(f"dimension mismatch: M {M.shape}, b {b.shape}")
    x = lu_solve(lu_factor(M, "M"), b)
    residual = vec_norm(M @ x - b)
    if not residual <= SOLVE_TOL * (mat_norm_1(M) * vec_norm(x) + vec_norm(b)):
        raise SingularSystem(f"solve residual {residual:.3e} exceeds tolerance")
    return x
