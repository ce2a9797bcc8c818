"""Finite-rank symmetric positive contraction kernels.

A kernel is stored spectrally: ``K(x, y) = sum_k lam_k phi_k(x) phi_k(y)``.
On a discrete space the eigenfunctions are orthonormal vectors; on an
interval they are coefficient vectors in the orthonormal shifted-Legendre
basis of the whole interval, so L2 inner products of eigenfunctions are plain
dot products of coefficients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ValidationError
from .ground import DEFAULT_QUAD_ORDER, Cell, GroundSpace, Quadrature, legendre_basis
from .linalg import clamp_unit_spectrum, eigh, orthonormalize_rows

DEFAULT_DEGREE = 32
_GRAM_TOL = 1e-12
_DROP_TOL = 1e-13


@dataclass(frozen=True, eq=False)
class SpectralKernel:
    space: GroundSpace
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray  # (rank, n) site vectors or (rank, degree + 1) coefficients
    name: str = ""
    params: dict = field(default_factory=dict)

    @property
    def rank(self) -> int:
        return len(self.eigenvalues)

    @property
    def degree(self) -> int:
        """Highest Legendre degree of the eigenfunctions (interval kernels)."""
        if self.space.is_discrete:
            return 0
        return self.eigenfunctions.shape[1] - 1

    @property
    def is_projection(self) -> bool:
        return bool(np.all(self.eigenvalues == 1.0))

    def eigenfunction_values(self, x) -> np.ndarray:
        """Values of all eigenfunctions at ``x``, shape ``(len(x), rank)``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        sp = self.space
        if sp.is_discrete:
            if np.any(x != np.round(x)) or np.any(x < 0) or np.any(x >= sp.size):
                raise DomainError("site index outside the discrete space")
            return self.eigenfunctions[:, x.astype(int)].T
        if np.any(x < sp.lo) or np.any(x > sp.hi):
            raise DomainError(f"point outside [{sp.lo}, {sp.hi}]")
        return legendre_basis(x, self.degree, sp.lo, sp.hi) @ self.eigenfunctions.T

    def matrix(self, x=None) -> np.ndarray:
        """Kernel matrix ``[K(x_i, x_j)]``; all sites by default on discrete spaces."""
        if x is None:
            if not self.space.is_discrete:
                raise DomainError("interval kernels need explicit points")
            x = np.arange(self.space.size)
        phi = self.eigenfunction_values(x)
        M = (phi * self.eigenvalues) @ phi.T
        return 0.5 * (M + M.T)

    def quad_order(self, other_degree: int | None = None) -> int:
        """Gauss order that integrates eigenfunction products exactly."""
        d = self.degree + (self.degree if other_degree is None else other_degree)
        return max(DEFAULT_QUAD_ORDER, math.ceil((d + 1) / 2))

    def trace(self) -> float:
        return float(np.sum(self.eigenvalues))

    def to_dict(self) -> dict:
        return {
            "space": self.space.to_dict(),
            "basis": "sites" if self.space.is_discrete else "legendre",
            "eigenvalues": self.eigenvalues.tolist(),
            "eigenfunctions": self.eigenfunctions.tolist(),
            "name": self.name,
            "params": self.params,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpectralKernel":
        space = GroundSpace.from_dict(d["space"])
        return make_kernel(
            space, d["eigenvalues"], np.asarray(d["eigenfunctions"], dtype=float),
            name=d.get("name", ""), params=d.get("params", {}),
        )


def legendre_coefficients(f, degree: int, lo: float = 0.0, hi: float = 1.0, order: int | None = None):
    """Project a callable onto the orthonormal Legendre basis of ``[lo, hi)``."""
    quad = Quadrature.for_cell(Cell.interval((lo, hi)), order or 2 * degree + 32)
    B = legendre_basis(quad.nodes, degree, lo, hi)
    return (quad.weights * np.asarray(f(quad.nodes), dtype=float)) @ B


def make_kernel(space: GroundSpace, eigenvalues, eigenfunctions, name: str = "", params=None,
                degree: int = DEFAULT_DEGREE) -> SpectralKernel:
    """Validate and assemble a kernel.

    ``eigenfunctions`` holds one row per eigenvalue (site vectors or Legendre
    coefficients); on an interval a list of callables is also accepted and
    projected onto degree ``degree``.  Rows are re-orthonormalized when their
    Gram matrix is off the identity by more than 1e-12.
    """
    lam = np.asarray(eigenvalues, dtype=float).reshape(-1)
    if lam.size == 0:
        raise ValidationError("kernel needs at least one eigenvalue")
    if np.any(~np.isfinite(lam)) or np.any(lam <= 0.0) or np.any(lam > 1.0):
        raise ValidationError(f"eigenvalues must lie in (0, 1], got {lam.tolist()}")
    if not space.is_discrete and len(eigenfunctions) and callable(eigenfunctions[0]):
        C = np.array([legendre_coefficients(f, degree, space.lo, space.hi) for f in eigenfunctions])
    else:
        C = np.atleast_2d(np.asarray(eigenfunctions, dtype=float))
    if C.shape[0] != lam.size:
        raise ValidationError(f"{lam.size} eigenvalues but {C.shape[0]} eigenfunctions")
    if space.is_discrete and C.shape[1] != space.size:
        raise ValidationError(f"eigenvectors must have length {space.size}")
    gram = C @ C.T
    if np.abs(gram - np.eye(lam.size)).max() > _GRAM_TOL:
        C = orthonormalize_rows(C)
    return SpectralKernel(space, lam, C, name, dict(params or {}))


@dataclass(frozen=True, eq=False)
class CompressedKernel:
    """Gram form of the compression of ``parent`` to ``cell``.

    ``G[k, l] = sqrt(lam_k lam_l) (phi_k, phi_l)_cell`` has the same nonzero
    spectrum as the compressed integral operator.
    """

    parent: SpectralKernel
    cell: Cell
    G: np.ndarray

    @property
    def trace(self) -> float:
        return float(np.trace(self.G))


def cell_gram(K: SpectralKernel, cell: Cell) -> np.ndarray:
    """``M[k, l] = (phi_k, phi_l)`` in L2 of ``cell``."""
    cell.check_in(K.space)
    if K.space.is_discrete:
        V = K.eigenfunctions[:, list(cell.indices)]
        return V @ V.T
    quad = Quadrature.for_cell(cell, K.quad_order())
    phi = K.eigenfunction_values(quad.nodes)
    M = phi.T @ (quad.weights[:, None] * phi)
    return 0.5 * (M + M.T)


def compress(K: SpectralKernel, cell: Cell) -> CompressedKernel:
    cell.check_in(K.space)
    if cell.measure <= 0:
        raise DomainError("cannot compress to a zero-measure cell")
    s = np.sqrt(K.eigenvalues)
    G = s[:, None] * cell_gram(K, cell) * s[None, :]
    return CompressedKernel(K, cell, G)


def spectrum(C) -> tuple:
    """Eigenvalues (descending, clamped to [0, 1]) and frame eigenvectors.

    Accepts a :class:`CompressedKernel` or a bare symmetric matrix.
    """
    G = C.G if isinstance(C, CompressedKernel) else np.asarray(C, dtype=float)
    w, V = eigh(G)
    return clamp_unit_spectrum(w), V


def eval_kernel(K: SpectralKernel, x, y) -> float:
    px = K.eigenfunction_values([x])[0]
    py = K.eigenfunction_values([y])[0]
    return float(np.sum(K.eigenvalues * (px * py)))


def intensity_determinant(K: SpectralKernel, points, return_raw: bool = False):
    """``det[K(x_i, x_j)]``, the k-point intensity at distinct ``points``.

    Negative roundoff is reported as 0; pass ``return_raw=True`` to also get
    the unclamped determinant.
    """
    pts = np.asarray(points, dtype=float).reshape(-1)
    if len(np.unique(pts)) != len(pts):
        raise DomainError("intensity needs pairwise distinct points")
    if pts.size == 0:
        raw = 1.0
    else:
        raw = float(np.linalg.det(K.matrix(pts)))
    value = max(raw, 0.0)
    return (value, raw) if return_raw else value


# ---------------------------------------------------------------- presets

def diag(*p) -> SpectralKernel:
    """Diagonal kernel on ``len(p)`` sites; zero entries carry no eigenvector."""
    if len(p) == 1 and np.ndim(p[0]) == 1:
        p = tuple(p[0])
    p = np.asarray(p, dtype=float)
    keep = np.flatnonzero(p != 0.0)
    E = np.eye(len(p))[keep]
    return make_kernel(GroundSpace.discrete(len(p)), p[keep], E, "diag", {"p": p.tolist()})


def constant_rank1(lo: float = 0.0, hi: float = 1.0, degree: int = 0) -> SpectralKernel:
    space = GroundSpace.interval(lo, hi)
    C = np.zeros((1, degree + 1))
    C[0, 0] = 1.0
    return make_kernel(space, [1.0], C, "constant-rank1", {"lo": lo, "hi": hi})


def fourier_functions(count: int, lo: float = 0.0, hi: float = 1.0):
    """``1, sqrt2 cos(2 pi x), sqrt2 sin(2 pi x), sqrt2 cos(4 pi x), ...`` normalized on [lo, hi]."""
    L = hi - lo
    out = []
    for k in range(count):
        freq = (k + 1) // 2
        if k == 0:
            out.append(lambda x, L=L: np.full(np.shape(x), 1.0 / math.sqrt(L)))
        elif k % 2 == 1:
            out.append(lambda x, f=freq: math.sqrt(2.0 / L) * np.cos(2 * math.pi * f * (x - lo) / L))
        else:
            out.append(lambda x, f=freq: math.sqrt(2.0 / L) * np.sin(2 * math.pi * f * (x - lo) / L))
    return out


def fourier_projection(rank: int, degree: int = DEFAULT_DEGREE, lo: float = 0.0, hi: float = 1.0) -> SpectralKernel:
    """Projection onto the first ``rank`` trigonometric functions (sine-kernel surrogate)."""
    space = GroundSpace.interval(lo, hi)
    return make_kernel(space, np.ones(rank), fourier_functions(rank, lo, hi), "fourier-projection",
                       {"rank": rank, "degree": degree}, degree=degree)


def fourier_mixed(eigenvalues, degree: int = DEFAULT_DEGREE) -> SpectralKernel:
    lam = list(eigenvalues)
    return make_kernel(GroundSpace.interval(), lam, fourier_functions(len(lam)), "fourier-mixed",
                       {"eigenvalues": lam, "degree": degree}, degree=degree)


def legendre_mixed(eigenvalues, degree: int | None = None) -> SpectralKernel:
    """Eigenfunctions are the first Legendre polynomials on [0, 1]."""
    lam = list(eigenvalues)
    deg = len(lam) - 1 if degree is None else degree
    C = np.eye(len(lam), deg + 1)
    return make_kernel(GroundSpace.interval(), lam, C, "legendre-mixed", {"eigenvalues": lam})


def from_matrix(M, name: str = "matrix", drop_tol: float = _DROP_TOL) -> SpectralKernel:
    """Spectral kernel of a symmetric matrix with spectrum in [0, 1]."""
    M = np.asarray(M, dtype=float)
    w, V = eigh(M)
    w = clamp_unit_spectrum(w)
    keep = w > drop_tol
    if not keep.any():
        raise ValidationError("matrix kernel has no positive eigenvalue")
    return make_kernel(GroundSpace.discrete(M.shape[0]), w[keep], V[:, keep].T, name,
                       {"matrix": M.tolist()} if name == "matrix" else {})


def sine_matrix(n: int, bandwidth: float = 0.3) -> np.ndarray:
    d = np.subtract.outer(np.arange(n), np.arange(n)).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        M = np.sin(math.pi * bandwidth * d) / (math.pi * d)
    M[np.arange(n), np.arange(n)] = bandwidth
    return M


def discretized_sine(n: int, bandwidth: float = 0.3) -> SpectralKernel:
    """Discrete sine kernel ``sin(pi b (s - t)) / (pi (s - t))`` on ``n`` sites."""
    if not 0.0 < bandwidth < 1.0:
        raise ValidationError("bandwidth must lie in (0, 1)")
    K = from_matrix(sine_matrix(n, bandwidth), name="discretized-sine")
    return SpectralKernel(K.space, K.eigenvalues, K.eigenfunctions, "discretized-sine",
                          {"n": n, "bandwidth": bandwidth})


PRESETS = {
    "diag": lambda p: diag(p),
    "constant-rank1": lambda lo=0.0, hi=1.0: constant_rank1(lo, hi),
    "fourier-projection": lambda rank, degree=DEFAULT_DEGREE: fourier_projection(rank, degree),
    "fourier-mixed": lambda eigenvalues, degree=DEFAULT_DEGREE: fourier_mixed(eigenvalues, degree),
    "legendre-mixed": lambda eigenvalues: legendre_mixed(eigenvalues),
    "discretized-sine": lambda n, bandwidth=0.3: discretized_sine(n, bandwidth),
    "matrix": lambda matrix: from_matrix(matrix),
}


def preset(name: str, **params) -> SpectralKernel:
    try:
        build = PRESETS[name]
    except KeyError:
        raise ValidationError(f"unknown kernel preset {name!r}; choose from {sorted(PRESETS)}") from None
    try:
        return build(**params)
    except TypeError as exc:
        raise ValidationError(f"bad parameters for preset {name!r}: {exc}") from None
