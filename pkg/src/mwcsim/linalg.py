"""Small dense complex matrix helpers.

Matrices and vectors are plain ``numpy`` ``complex128`` arrays (2-D and 1-D).
Only the handful of operations the simulator needs are exposed; each one
checks shapes and raises ``ValueError`` on mismatch.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "as_matrix",
    "as_vector",
    "multiply",
    "add",
    "conj_transpose",
    "vector_norm_sq",
    "determinant",
]


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def as_vector(v) -> np.ndarray:
    x = np.asarray(v, dtype=np.complex128)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {x.shape}")
    return x


def multiply(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def add(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape != b.shape:
        raise ValueError(f"cannot add {a.shape} and {b.shape}")
    return a + b


def conj_transpose(a) -> np.ndarray:
    return as_matrix(a).conj().T


def vector_norm_sq(v) -> float:
    x = as_vector(v)
    return float(np.sum(x.real**2 + x.imag**2))


def determinant(a) -> complex:
    """Determinant by Gaussian elimination with partial pivoting.

    The input is copied; rows are swapped so that the pivot in each column
    is the entry of largest modulus, and the sign flips are tracked.
    """
    m = as_matrix(a).copy()
    n, cols = m.shape
    if n != cols:
        raise ValueError(f"determinant needs a square matrix, got {m.shape}")
    det = 1.0 + 0.0j
    for col in range(n):
        pivot = col + int(np.argmax(np.abs(m[col:, col])))
        if m[pivot, col] == 0:
            return 0j
        if pivot != col:
            m[[col, pivot]] = m[[pivot, col]]
            det = -det
        p = m[col, col]
        det *= p
        if col + 1 < n:
            factors = m[col + 1 :, col] / p
            m[col + 1 :, col:] -= np.outer(factors, m[col, col:])
    return complex(det)
