"""
Dense complex matrices and the toleranced order predicates.

Every positivity question in the package (CP checks, the ⊑ order, subunitality,
Kleene monotonicity) is answered by :func:`is_psd`, so this is the one place
where numerical slack enters.

Conventions: row-major, 0-based indices; composite indices are lexicographic
with the left Kronecker factor major.
"""

from typing import Any, Optional

import numpy as np

from src.models.errors import NotUnitaryError, ShapeError
from src.models.tolerance import Tolerance, resolve_tolerance
from src.utils.logger import get_logger

CMatrix = np.ndarray

logger = get_logger("matrix_core")


def as_cmatrix(data: Any) -> CMatrix:
    """
    Validate and freeze a complex matrix.

    Args:
        data: Anything ``numpy.asarray`` accepts as a 2-D array

    Returns:
        Read-only complex ``ndarray`` of shape (rows, cols)

    Raises:
        ShapeError: If the input is not 2-D, has an empty side, or holds NaN/Inf
    """
    arr = np.array(data, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"Expected a non-empty 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeError("Matrix entries must be finite")
    arr.setflags(write=False)
    return arr


def identity(n: int) -> CMatrix:
    return as_cmatrix(np.eye(n))


def zeros(rows: int, cols: int) -> CMatrix:
    return as_cmatrix(np.zeros((rows, cols)))


def basis_matrix(n: int, i: int, j: int) -> CMatrix:
    """Matrix unit e_ij in M_n."""
    e = np.zeros((n, n), dtype=complex)
    e[i, j] = 1.0
    return as_cmatrix(e)


def adjoint(a: CMatrix) -> CMatrix:
    """Conjugate transpose (the * of the matrix algebra)."""
    return as_cmatrix(np.conj(a).T)


def kron(a: CMatrix, b: CMatrix) -> CMatrix:
    """Kronecker product, left factor major."""
    return as_cmatrix(np.kron(a, b))


def _require_square(a: CMatrix) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"Expected a square matrix, got shape {a.shape}")


def _require_same_shape(a: CMatrix, b: CMatrix) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"Shape mismatch: {a.shape} vs {b.shape}")


def spectral_norm(a: CMatrix) -> float:
    return float(np.linalg.norm(a, 2)) if a.size else 0.0


def max_entry(a: CMatrix) -> float:
    return float(np.max(np.abs(a))) if a.size else 0.0


def max_entry_distance(a: CMatrix, b: CMatrix) -> float:
    _require_same_shape(a, b)
    return max_entry(np.asarray(a) - np.asarray(b))


def hermiticity_defect(a: CMatrix) -> float:
    """Largest entry of the anti-Hermitian part, relative to max(1, max entry)."""
    _require_square(a)
    return max_entry(a - np.conj(a).T) / max(1.0, max_entry(a))


def is_hermitian(a: CMatrix, tol: Optional[Tolerance] = None) -> bool:
    tol = resolve_tolerance(tol)
    return hermiticity_defect(a) <= tol.eps_eq


def hermitian_part(a: CMatrix, tol: Optional[Tolerance] = None) -> CMatrix:
    """
    Project numerical noise away: (a + a*)/2.

    Raises:
        ShapeError: If the anti-Hermitian part exceeds eps_eq; that is a logic
            error upstream, not noise
    """
    tol = resolve_tolerance(tol)
    defect = hermiticity_defect(a)
    if defect > tol.eps_eq:
        raise ShapeError(f"Matrix is not Hermitian (anti-Hermitian part {defect:.3e})")
    return (np.asarray(a) + np.conj(a).T) / 2.0


def eigenvalues(a: CMatrix, tol: Optional[Tolerance] = None) -> np.ndarray:
    """Ascending real spectrum of a Hermitian matrix."""
    _require_square(a)
    return np.linalg.eigvalsh(hermitian_part(a, tol))


def min_eigenvalue(a: CMatrix, tol: Optional[Tolerance] = None) -> float:
    return float(eigenvalues(a, tol)[0])


def is_psd(a: CMatrix, tol: Optional[Tolerance] = None) -> bool:
    """
    Positivity test: Hermitian within eps_eq and
    min eigenvalue >= -eps_psd * max(1, ||a||).

    Raises:
        ShapeError: If ``a`` is not square
    """
    tol = resolve_tolerance(tol)
    _require_square(a)
    if hermiticity_defect(a) > tol.eps_eq:
        logger.debug("is_psd: input not Hermitian, answering False")
        return False
    herm = hermitian_part(a, tol)
    spectrum = np.linalg.eigvalsh(herm)
    scale = max(1.0, float(np.max(np.abs(spectrum))))
    return bool(spectrum[0] >= -tol.eps_psd * scale)


def loewner_leq(a: CMatrix, b: CMatrix, tol: Optional[Tolerance] = None) -> bool:
    """a ≤ b in the Löwner order, i.e. b − a is positive."""
    _require_square(a)
    _require_same_shape(a, b)
    return is_psd(np.asarray(b) - np.asarray(a), tol)


def is_effect(a: CMatrix, tol: Optional[Tolerance] = None) -> bool:
    """0 ≤ a ≤ 1."""
    _require_square(a)
    return is_psd(a, tol) and loewner_leq(a, np.eye(a.shape[0]), tol)


def is_unitary(u: CMatrix, tol: Optional[Tolerance] = None) -> bool:
    tol = resolve_tolerance(tol)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    return max_entry(np.conj(u).T @ u - np.eye(u.shape[0])) <= tol.eps_eq


def require_unitary(u: CMatrix, tol: Optional[Tolerance] = None) -> CMatrix:
    u = as_cmatrix(u)
    if not is_unitary(u, tol):
        raise NotUnitaryError(f"Matrix of shape {u.shape} is not unitary")
    return u


def trace_pairing(a: CMatrix, b: CMatrix) -> complex:
    """tr(a · b)."""
    return complex(np.trace(np.asarray(a) @ np.asarray(b)))
