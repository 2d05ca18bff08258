"""Dense symmetric kernels for the incremental BFGS solvers.

Matrices are plain float64 ``numpy`` arrays. The lower triangle is authoritative: every
operation that returns a ``SymMatrix`` copies its lower triangle over the upper one before
returning, so ``A[i, j] == A[j, i]`` holds bit-exactly.
"""
from typing import Optional, Sequence

import numpy as np
import numpy.typing as npt
import scipy.linalg

from .errors import DegenerateDenominatorError, SingularMatrixError

SymMatrix = npt.NDArray[np.float64]
Vector = npt.NDArray[np.float64]

_RELATIVE_EPS = 1e-12
_PIVOT_TOLERANCE = 1e-14


def symmetrize(a: np.ndarray) -> SymMatrix:
    lower = np.tril(a)
    return lower + np.tril(a, -1).T


def _check_dims(matrix: np.ndarray, *vectors: np.ndarray) -> None:
    n = matrix.shape[0]
    if matrix.shape != (n, n) or n < 1:
        raise ValueError(f'expected a non-empty square matrix, got shape {matrix.shape}')
    for v in vectors:
        if v.shape != (n,):
            raise ValueError(f'vector of shape {v.shape} does not match matrix of order {n}')


def bfgs_update(B: SymMatrix, s: Vector, y: Vector, eps_denominator: Optional[float] = None) -> SymMatrix:
    """Returns B - (Bs)(Bs)^T / (s^T B s) + y y^T / (y^T s).

    The result satisfies the secant equation B_new s = y. Raises DegenerateDenominatorError
    when either denominator is at or below eps_denominator (default: 1e-12 times the size of
    the vectors forming it); callers treat that as a skipped update.
    """
    _check_dims(B, s, y)
    Bs = B @ s
    sBs = float(s @ Bs)
    sy = float(s @ y)
    s_norm = np.linalg.norm(s)
    eps_curv = eps_denominator if eps_denominator is not None else _RELATIVE_EPS * s_norm * np.linalg.norm(Bs)
    eps_secant = eps_denominator if eps_denominator is not None else _RELATIVE_EPS * s_norm * np.linalg.norm(y)
    if not sBs > eps_curv:
        raise DegenerateDenominatorError(f's^T B s = {sBs:.3e} is not above {eps_curv:.3e}')
    if not sy > eps_secant:
        raise DegenerateDenominatorError(f's^T y = {sy:.3e} is not above {eps_secant:.3e}')
    return symmetrize(B - np.outer(Bs, Bs) / sBs + np.outer(y, y) / sy)


def aggregate_inverse_update(
        Binv: SymMatrix, B_old_i: SymMatrix, s: Vector, y: Vector, eps_denominator: Optional[float] = None
) -> SymMatrix:
    """Updates (sum_i B_i)^{-1} after component i received a BFGS update from (s, y).

    Two Sherman-Morrison stages: the first accounts for the added y y^T / (y^T s), the second
    for the removed (B s)(B s)^T / (s^T B s), where B is the component's matrix before the
    update.
    """
    _check_dims(Binv, s, y)
    _check_dims(B_old_i, s)
    Binv_y = Binv @ y
    sy = float(y @ s)
    yBy = float(y @ Binv_y)
    first = sy + yBy
    eps_first = eps_denominator if eps_denominator is not None else _RELATIVE_EPS * (abs(sy) + abs(yBy))
    if not abs(first) > eps_first:
        raise DegenerateDenominatorError(f'first Sherman-Morrison denominator {first:.3e} is degenerate')
    U = Binv - np.outer(Binv_y, Binv_y) / first

    Bs = B_old_i @ s
    U_Bs = U @ Bs
    sBs = float(s @ Bs)
    second = sBs - float(Bs @ U_Bs)
    eps_second = eps_denominator if eps_denominator is not None else _RELATIVE_EPS * abs(sBs)
    if not abs(second) > eps_second:
        raise DegenerateDenominatorError(f'second Sherman-Morrison denominator {second:.3e} is degenerate')
    return symmetrize(U + np.outer(U_Bs, U_Bs) / second)


def solve_apply(Binv: SymMatrix, rhs: Vector) -> Vector:
    _check_dims(Binv, rhs)
    return Binv @ rhs


def dense_sum_invert(components: Sequence[SymMatrix]) -> SymMatrix:
    """Inverts the sum of the given matrices through an LU factorization."""
    if not components:
        raise ValueError('need at least one matrix')
    total = np.sum(np.stack(components), axis=0)
    _check_dims(total)
    scale = np.max(np.abs(np.diag(total)))
    lu, piv = scipy.linalg.lu_factor(total, check_finite=True)
    smallest = np.min(np.abs(np.diag(lu)))
    if scale == 0.0 or smallest < _PIVOT_TOLERANCE * scale:
        raise SingularMatrixError(f'pivot {smallest:.3e} below tolerance for diagonal scale {scale:.3e}')
    inverse = scipy.linalg.lu_solve((lu, piv), np.eye(total.shape[0]))
    return symmetrize(inverse)


def is_positive_definite(B: SymMatrix) -> bool:
    try:
        scipy.linalg.cholesky(B, lower=True)
    except scipy.linalg.LinAlgError:
        return False
    return True
