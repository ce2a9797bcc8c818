"""Discretization of a kernel onto cell-indexed coordinates.

For every cell ``A_i`` of a partition an orthonormal basis ``w_{i,j}`` of
functions supported on the cell is fixed (site indicators on discrete
spaces, piecewise normalized Legendre polynomials on intervals).  The map
``T`` sending ``w_{i,j}`` to the coordinate vector ``(i, j)`` is unitary, and
``Q = T K T^-1`` is a discrete kernel on ``F`` whose block counts have the
same joint law as the cell counts under ``K``.

Infinite bases are truncated: each cell keeps the fewest functions that leave
at most ``tol / (number of cells)`` of weighted eigenfunction energy behind.
The total loss is reported as ``leakage``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ToleranceError, ValidationError
from .ground import Cell, Partition, Quadrature, legendre_basis
from .kernel import SpectralKernel, cell_gram
from .linalg import eigh

DEFAULT_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class CellBasis:
    """First ``n`` orthonormal functions supported on ``cell``.

    On intervals function ``j`` is the Legendre polynomial of degree
    ``terms[j][0]`` normalized on piece ``terms[j][1]`` and zero elsewhere;
    terms are ordered by degree, then piece.
    """

    index: int
    cell: Cell
    n: int
    residual: float
    terms: tuple = ()

    def values(self, x) -> np.ndarray:
        """Basis functions at ``x``, shape ``(len(x), n)``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros((x.size, self.n))
        if self.cell.is_discrete:
            for j, site in enumerate(self.cell.indices[: self.n]):
                out[x == site, j] = 1.0
            return out
        if self.n == 0:
            return out
        max_deg = max(d for d, _ in self.terms[: self.n])
        for p, (a, b) in enumerate(self.cell.pieces):
            inside = (x >= a) & (x < b)
            if not inside.any():
                continue
            B = legendre_basis(x[inside], max_deg, a, b)
            for j, (d, piece) in enumerate(self.terms[: self.n]):
                if piece == p:
                    out[inside, j] = B[:, d]
        return out


def _candidate_terms(cell: Cell, max_degree: int):
    return tuple((d, p) for d in range(max_degree + 1) for p in range(len(cell.pieces)))


def _coefficients(K: SpectralKernel, cell: Cell, terms) -> np.ndarray:
    """``A[k, j] = (phi_k, w_j)`` over the candidate terms of ``cell``."""
    max_deg = max(d for d, _ in terms)
    quad = Quadrature.for_cell(cell, K.quad_order(max_deg))
    phi = K.eigenfunction_values(quad.nodes)
    basis = CellBasis(-1, cell, len(terms), 0.0, terms)
    W = basis.values(quad.nodes)
    return (phi * quad.weights[:, None]).T @ W


def build_cell_bases(K: SpectralKernel, P: Partition, tol: float = DEFAULT_TOL,
                     max_degree: int | None = None) -> list:
    """Per-cell orthonormal bases truncated to an energy budget of ``tol``.

    Discrete cells always get their full singleton basis.  On intervals the
    candidate functions go up to ``max_degree`` (the kernel's own degree by
    default, which makes capture exact in exact arithmetic).
    """
    if not tol > 0:
        raise ValidationError("tol must be positive")
    if P.kind != K.space.kind:
        raise DomainError("partition kind does not match the kernel's space")
    for c in P.cells:
        c.check_in(K.space)
    if not P.covers(K.space):
        raise DomainError("transference needs a partition of the whole ground space")
    budget = tol / len(P)
    max_degree = K.degree if max_degree is None else int(max_degree)
    bases = []
    for i, cell in enumerate(P.cells):
        if cell.is_discrete:
            bases.append(CellBasis(i, cell, len(cell.indices), 0.0))
            continue
        terms = _candidate_terms(cell, max_degree)
        A = _coefficients(K, cell, terms)
        energy = np.diag(cell_gram(K, cell))
        captured = np.concatenate([np.zeros((K.rank, 1)), np.cumsum(A * A, axis=1)], axis=1)
        residual = (K.eigenvalues[:, None] * (energy[:, None] - captured)).sum(axis=0)
        ok = np.flatnonzero(residual <= budget)
        if ok.size == 0:
            raise ToleranceError(
                f"cell {i}: residual energy {residual.min():.3g} exceeds budget {budget:.3g} "
                f"with Legendre degree <= {max_degree}",
                achieved=float(residual.min()), kind="leakage",
            )
        n = int(ok[0])
        bases.append(CellBasis(i, cell, n, float(max(residual[n], 0.0)), terms))
    return bases


@dataclass(frozen=True, eq=False)
class TransferMap:
    """``T[(i, j), k] = (phi_k, w_{i,j})`` with rows grouped into blocks."""

    T: np.ndarray
    blocks: tuple
    bases: tuple
    eigenvalues: np.ndarray

    @property
    def size(self) -> int:
        return self.T.shape[0]

    @property
    def column_norms(self) -> np.ndarray:
        return np.sum(self.T * self.T, axis=0)

    @property
    def leakage(self) -> float:
        return float(max(np.sum(self.eigenvalues * (1.0 - self.column_norms)), 0.0))

    def block_rows(self, i: int) -> np.ndarray:
        start, length = self.blocks[i]
        return np.arange(start, start + length)

    def apply_coefficients(self, c) -> np.ndarray:
        """``T phi`` for ``phi = sum_k c_k phi_k``."""
        return self.T @ np.asarray(c, dtype=float)


def apply_transfer(bases, f, order: int = 48) -> np.ndarray:
    """``T f`` for an arbitrary function, by direct quadrature against every ``w_{i,j}``.

    ``f`` is a callable on interval spaces, a site vector on discrete ones.
    """
    parts = []
    for b in bases:
        if b.cell.is_discrete:
            vec = np.asarray(f, dtype=float)
            parts.append(vec[list(b.cell.indices[: b.n])])
            continue
        quad = Quadrature.for_cell(b.cell, order)
        parts.append((quad.weights * np.asarray(f(quad.nodes), dtype=float)) @ b.values(quad.nodes))
    return np.concatenate(parts) if parts else np.zeros(0)


def build_transfer(K: SpectralKernel, bases) -> TransferMap:
    if not bases:
        raise ValidationError("no cell bases given")
    rows, blocks, start = [], [], 0
    for b in bases:
        if b.cell.is_discrete != K.space.is_discrete:
            raise ValidationError("cell bases do not match the kernel's space")
        if b.cell.is_discrete:
            block = K.eigenfunctions[:, list(b.cell.indices[: b.n])].T
        elif b.n == 0:
            block = np.zeros((0, K.rank))
        else:
            block = _coefficients(K, b.cell, b.terms[: b.n]).T
        if block.shape != (b.n, K.rank):
            raise ValidationError("dimension mismatch between basis and kernel")
        rows.append(block)
        blocks.append((start, b.n))
        start += b.n
    T = np.vstack(rows)
    return TransferMap(T, tuple(blocks), tuple(bases), K.eigenvalues.copy())


@dataclass(frozen=True, eq=False)
class TransferredKernel:
    Q: np.ndarray
    blocks: tuple
    leakage: float
    tol: float
    transfer_map: TransferMap | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.Q.shape[0]

    def block_indices(self) -> list:
        return [list(range(s, s + n)) for s, n in self.blocks]

    def to_dict(self) -> dict:
        return {
            "Q": self.Q.reshape(-1).tolist(),
            "size": self.size,
            "blocks": [list(b) for b in self.blocks],
            "leakage": self.leakage,
            "tol": self.tol,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TransferredKernel":
        n = int(d["size"])
        Q = np.asarray(d["Q"], dtype=float).reshape(n, n)
        return cls(Q, tuple(tuple(b) for b in d["blocks"]), float(d["leakage"]), float(d["tol"]))


def transfer(K: SpectralKernel, tmap: TransferMap, tol: float = DEFAULT_TOL) -> TransferredKernel:
    """``Q = T diag(lam) T^t``, refused when the leakage exceeds ``tol``."""
    if tmap.T.shape[1] != K.rank:
        raise ValidationError("transfer map was built for a different kernel")
    eps = tmap.leakage
    if eps > tol:
        raise ToleranceError(f"leakage {eps:.3g} exceeds tolerance {tol:.3g}; refine the bases",
                             achieved=eps, kind="leakage")
    Q = (tmap.T * K.eigenvalues) @ tmap.T.T
    Q = 0.5 * (Q + Q.T)
    return TransferredKernel(Q, tmap.blocks, eps, tol, tmap)


def transference(K: SpectralKernel, P: Partition, tol: float = DEFAULT_TOL,
                 max_degree: int | None = None) -> TransferredKernel:
    """Bases, transfer map and transferred kernel in one call."""
    bases = build_cell_bases(K, P, tol, max_degree)
    return transfer(K, build_transfer(K, bases), tol)


@dataclass(frozen=True)
class SpectrumReport:
    discrepancy: float
    bound: float
    eigenvalues_K: tuple
    eigenvalues_Q: tuple

    @property
    def ok(self) -> bool:
        return self.discrepancy <= self.bound


def spectrum_check(K: SpectralKernel, Q, leakage: float | None = None) -> SpectrumReport:
    """Largest gap between the sorted spectra of ``K`` and ``Q``, zero-padded."""
    if isinstance(Q, TransferredKernel):
        leakage = Q.leakage if leakage is None else leakage
        Q = Q.Q
    leakage = 0.0 if leakage is None else leakage
    wq, _ = eigh(Q)
    wk = np.sort(K.eigenvalues)[::-1]
    n = max(len(wq), len(wk))
    a = np.zeros(n)
    b = np.zeros(n)
    a[: len(wk)] = wk
    b[: len(wq)] = wq
    disc = float(np.abs(a - b).max()) if n else 0.0
    return SpectrumReport(disc, leakage + 1e-8, tuple(wk.tolist()), tuple(wq.tolist()))
