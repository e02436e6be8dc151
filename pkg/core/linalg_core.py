"""
Dense SPD Matrix Arithmetic
Rank-one inverse downdates, quadratic forms, Cholesky solves and definiteness checks
"""
from typing import Tuple

import numpy as np
import scipy.linalg
from numpy.typing import NDArray

from core.exceptions import DimensionMismatchError, NonSpdError, NumericInputError

Vector = NDArray[np.float64]
SpdMatrix = NDArray[np.float64]

# Tolerances shared by every numeric check in the lab
SOLVE_RESIDUAL_TOL = 1e-10
PIVOT_FLOOR = 1e-12
LOEWNER_TOL = 1e-10


def as_vector(x, name: str = "x") -> Vector:
    """Coerce to a finite 1-D float64 array"""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatchError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericInputError(f"{name} contains non-finite entries")
    return arr


def as_square(P, name: str = "P") -> SpdMatrix:
    """Coerce to a finite square float64 array"""
    arr = np.asarray(P, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionMismatchError(f"{name} must be square, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericInputError(f"{name} contains non-finite entries")
    return arr


def _check_dims(P: SpdMatrix, x: Vector) -> None:
    if P.shape[0] != x.shape[0]:
        raise DimensionMismatchError(
            f"matrix is {P.shape[0]}x{P.shape[1]} but vector has length {x.shape[0]}"
        )


def symmetrize(P: SpdMatrix) -> SpdMatrix:
    """(P + P^T) / 2, mirrored entries bit-equal"""
    return 0.5 * (P + P.T)


def rank_one_downdate(P: SpdMatrix, x: Vector, w: float) -> SpdMatrix:
    """
    Sherman-Morrison downdate of an inverse

    Returns (P^{-1} + w x x^T)^{-1} computed as
    P - w P x x^T P / (1 + w x^T P x), symmetrized.

    Args:
        P: Symmetric positive definite matrix
        x: Rank-one direction
        w: Non-negative weight of the rank-one term

    Returns:
        The downdated SPD matrix
    """
    P = as_square(P)
    x = as_vector(x)
    _check_dims(P, x)
    if not np.isfinite(w):
        raise NumericInputError(f"weight must be finite, got {w}")
    if w < 0:
        raise NumericInputError(f"weight must be non-negative, got {w}")
    if w == 0.0:
        return P.copy()
    return downdate_unchecked(P, x, w)


def downdate_unchecked(P: SpdMatrix, x: Vector, w: float) -> SpdMatrix:
    """rank_one_downdate without input validation, for inner loops over validated data"""
    px = P @ x
    denom = 1.0 + w * float(x @ px)
    return symmetrize(P - (w / denom) * np.outer(px, px))


def quadratic_form(P: SpdMatrix, x: Vector) -> float:
    """x^T P x"""
    P = as_square(P)
    x = as_vector(x)
    _check_dims(P, x)
    return float(x @ P @ x)


def cholesky_factor(A: SpdMatrix) -> Tuple[NDArray[np.float64], bool]:
    """Lower Cholesky factor, raising NonSpdError when a pivot drops below the floor"""
    A = as_square(A, "A")
    try:
        factor = scipy.linalg.cho_factor(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError as e:
        raise NonSpdError(f"Cholesky factorization failed: {e}") from e
    pivots = np.diag(factor[0]) ** 2
    if np.min(pivots) <= PIVOT_FLOOR:
        raise NonSpdError(f"Cholesky pivot {np.min(pivots):.3e} below floor {PIVOT_FLOOR}")
    return factor


def solve_spd(A: SpdMatrix, b: Vector) -> Vector:
    """Solve A x = b for SPD A through a Cholesky factorization"""
    A = as_square(A, "A")
    b = as_vector(b, "b")
    _check_dims(A, b)
    factor = cholesky_factor(A)
    return scipy.linalg.cho_solve(factor, b, check_finite=False)


def spd_inverse(A: SpdMatrix) -> SpdMatrix:
    """Inverse of an SPD matrix via Cholesky, symmetrized"""
    A = as_square(A, "A")
    factor = cholesky_factor(A)
    return symmetrize(scipy.linalg.cho_solve(factor, np.eye(A.shape[0]), check_finite=False))


def is_spd(P: SpdMatrix) -> bool:
    """True iff the Cholesky factorization succeeds with every pivot above PIVOT_FLOOR"""
    try:
        P = as_square(P)
    except (DimensionMismatchError, NumericInputError):
        return False
    if not np.array_equal(P, P.T):
        return False
    try:
        cholesky_factor(P)
    except NonSpdError:
        return False
    return True


def loewner_gap(A: SpdMatrix, B: SpdMatrix) -> float:
    """
    Smallest eigenvalue of A - B

    A dominates B in the Loewner order iff the gap is >= 0 (up to LOEWNER_TOL).
    """
    A = as_square(A, "A")
    B = as_square(B, "B")
    if A.shape != B.shape:
        raise DimensionMismatchError(f"shapes {A.shape} and {B.shape} differ")
    return float(np.linalg.eigvalsh(symmetrize(A - B))[0])
