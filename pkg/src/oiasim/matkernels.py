"""Small dense complex linear algebra used by the PHY layer.

The decompositions delegate to LAPACK through :mod:`numpy.linalg`; this module
adds the contracts the rest of the package relies on (orthonormal factors,
descending singular values, a fixed relative rank tolerance).
"""
from typing import NamedTuple

import numpy as np

from .errors import ContractViolation, NumericalFailure, RankDeficiencyError

#: Singular values below ``RANK_TOL * largest`` are treated as zero.
RANK_TOL = 1e-10


class SvdResult(NamedTuple):
    """``a == left @ diag(singular) @ right.conj().T``."""

    left: np.ndarray
    singular: np.ndarray
    right: np.ndarray


def as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ContractViolation(f"expected a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractViolation("matrix has non-finite entries")
    return a


def svd(a, full_matrices: bool = False) -> SvdResult:
    """Singular value decomposition of a complex matrix.

    Parameters
    ----------
    a : array_like, shape (r, c)
    full_matrices : bool
        If True, ``left`` is r x r and ``right`` is c x c; otherwise both have
        ``min(r, c)`` columns.

    Returns
    -------
    SvdResult
        Singular values are sorted in descending order.  The phase of each
        singular vector pair is whatever LAPACK returns.
    """
    a = as_matrix(a)
    if a.size == 0:
        r, c = a.shape
        n_left = r if full_matrices else 0
        n_right = c if full_matrices else 0
        return SvdResult(np.eye(r, n_left, dtype=complex), np.zeros(0), np.eye(c, n_right, dtype=complex))
    try:
        u, s, vh = np.linalg.svd(a, full_matrices=full_matrices)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("SVD did not converge", shape=a.shape) from exc
    return SvdResult(u, s, vh.conj().T)


def null_space(a, expected_dim: int) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of ``span(a)``.

    ``a`` is M x (M - expected_dim) with orthonormal columns.  When
    ``expected_dim == M`` (so ``a`` has no columns) any unitary is valid and
    the identity is returned.
    """
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2:
        raise ContractViolation(f"expected a 2-D matrix, got shape {a.shape}")
    m, n = a.shape
    if expected_dim < 0 or n != m - expected_dim:
        raise ContractViolation(
            f"null space of a {m}x{n} matrix cannot have dimension {expected_dim}")
    if n == 0:
        return np.eye(m, dtype=complex)
    left = svd(a, full_matrices=True).left
    return np.ascontiguousarray(left[:, n:])


def pseudo_inverse(a) -> np.ndarray:
    """Moore-Penrose inverse of a tall, full-column-rank matrix.

    Raises
    ------
    RankDeficiencyError
        If the smallest singular value is below ``RANK_TOL`` times the largest.
    """
    a = as_matrix(a)
    r, m = a.shape
    if m > r:
        raise ContractViolation(f"pseudo_inverse expects rows >= cols, got {a.shape}")
    left, s, right = svd(a)
    if s[0] == 0.0 or s[-1] <= RANK_TOL * s[0]:
        raise RankDeficiencyError(f"matrix of shape {a.shape} is rank deficient")
    return (right / s) @ left.conj().T


def random_orthonormal(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed matrix with orthonormal columns.

    QR of an i.i.d. CN(0, 1) matrix with the phases of R's diagonal folded
    back into Q, so the result is invariant under left unitary rotation.
    """
    if not 1 <= cols <= rows:
        raise ContractViolation(f"need 1 <= cols <= rows, got rows={rows}, cols={cols}")
    z = complex_normal(rng, (rows, cols))
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """i.i.d. CN(0, 1) samples: real and imaginary parts each have variance 1/2."""
    shape = tuple(shape) if np.iterable(shape) else (int(shape),)
    out = rng.standard_normal(shape + (2,)).view(complex)[..., 0]
    out *= np.sqrt(0.5)
    return out
