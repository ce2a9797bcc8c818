"""Small dense linear algebra used across the package."""
from __future__ import annotations

import numpy as np

from . import _backend
from .errors import ValidationError

CLAMP_TOL = 1e-12


def eigh(A, tol: float = 1e-12, max_sweeps: int = 100):
    """Eigen-decomposition of a real symmetric matrix by cyclic Jacobi.

    Returns ``(w, V)`` with eigenvalues sorted descending and orthonormal
    eigenvector columns.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {A.shape}")
    if A.shape[0] == 0:
        return np.zeros(0), np.zeros((0, 0))
    asym = np.abs(A - A.T).max()
    if asym > 1e-10 * max(1.0, np.abs(A).max()):
        raise ValidationError(f"matrix is not symmetric (max asymmetry {asym:.3g})")
    A = 0.5 * (A + A.T)
    w, V, _, _ = _backend.jacobi_eigh(np.ascontiguousarray(A), tol, max_sweeps)
    order = np.argsort(-w, kind="stable")
    return w[order], V[:, order]


def clamp_unit_spectrum(w, tol: float = CLAMP_TOL):
    """Snap roundoff just outside [0, 1] back onto the interval.

    Values further than ``tol`` outside are treated as modelling errors.
    """
    w = np.array(w, dtype=float)
    if w.size and (w.min() < -tol or w.max() > 1.0 + tol):
        raise ValidationError(
            f"spectrum outside [0, 1] beyond tolerance {tol:g}: [{w.min():.3g}, {w.max():.3g}]"
        )
    return np.clip(w, 0.0, 1.0)


def orthonormalize_rows(C, rank_tol: float = 1e-10):
    """Modified Gram-Schmidt with one re-orthogonalization pass.

    Raises if the rows are numerically dependent.
    """
    C = np.array(C, dtype=float)
    out = np.zeros_like(C)
    for k in range(C.shape[0]):
        v = C[k].copy()
        orig = np.linalg.norm(v)
        for _ in range(2):
            for j in range(k):
                v -= np.dot(out[j], v) * out[j]
        nrm = np.linalg.norm(v)
        if orig == 0 or nrm < rank_tol * max(1.0, orig):
            raise ValidationError(f"eigenfunction set is rank deficient at index {k}")
        out[k] = v / nrm
    return out


def off_norm(A) -> float:
    A = np.asarray(A)
    return float(np.sqrt(np.sum(A * A) - np.sum(np.diag(A) ** 2)))
