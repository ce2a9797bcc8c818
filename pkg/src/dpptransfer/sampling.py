"""Exact sampling from discrete symmetric contraction kernels.

The spectral two-phase method: keep eigenvector ``k`` with probability
``lam_k``, then draw sites one at a time from the projection kernel of the
kept eigenvectors, downdating the site weights by Gram-Schmidt after each
pick.  Continuous kernels are sampled through their transferred kernel on a
fine uniform grid.

Randomness comes from :class:`RngStream`; all uniforms are drawn in numpy so
the compiled and fallback cores see identical inputs.
"""
from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _backend
from .countlaw import CountLaw
from .errors import DomainError, ToleranceError, ValidationError
from .ground import Cell, Partition
from .kernel import SpectralKernel
from .linalg import clamp_unit_spectrum, eigh
from .transference import CellBasis, TransferredKernel, build_transfer, transfer

CHUNK = 1 << 15
_KEEP_TOL = 1e-12


@dataclass(frozen=True)
class RngStream:
    """Reproducible substream ``stream`` of master seed ``seed`` (PCG64)."""

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(int(self.stream),))
        return np.random.Generator(np.random.PCG64(ss))


def _generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng)).generator()
    raise ValidationError(f"expected an RngStream, got {type(rng).__name__}")


@dataclass(frozen=True)
class PointConfiguration:
    """A simple configuration of sites; ``points`` holds surrogate locations if continuous."""

    sites: tuple
    size: int
    points: tuple | None = None

    def __post_init__(self):
        if len(set(self.sites)) != len(self.sites):
            raise ValidationError("configuration repeats a site")

    def __len__(self):
        return len(self.sites)

    def count(self, where) -> int:
        """``xi(where)`` for a :class:`Cell` or an index block."""
        if isinstance(where, Cell) and not where.is_discrete:
            if self.points is None:
                raise DomainError("interval cell needs a configuration with points")
            return int(sum(where.contains(x) for x in self.points))
        idx = set(where.indices if isinstance(where, Cell) else where)
        return sum(1 for s in self.sites if s in idx)


class Sampler:
    """Caches the spectral decomposition of ``Q`` across draws."""

    def __init__(self, Q):
        if isinstance(Q, TransferredKernel):
            Q = Q.Q
        Q = np.asarray(Q, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise ValidationError("kernel matrix must be square")
        w, V = eigh(Q)
        w = clamp_unit_spectrum(w, 1e-10)
        keep = w > _KEEP_TOL
        self.n = Q.shape[0]
        self.eigenvalues = np.ascontiguousarray(w[keep])
        self.eigenvectors = np.ascontiguousarray(V[:, keep])

    @property
    def rank(self) -> int:
        return len(self.eigenvalues)

    def draw(self, rng, n_samples: int):
        """``(sites, sizes)``: sites padded with -1, one row per configuration."""
        g = _generator(rng)
        r = self.rank
        sites = np.full((n_samples, r), -1, dtype=np.int32)
        sizes = np.zeros(n_samples, dtype=np.int32)
        for start in range(0, n_samples, CHUNK):
            c = min(CHUNK, n_samples - start)
            u_sel = g.random((c, r))
            u_site = g.random((c, r))
            s, z = _backend.sample_batch(self.eigenvectors, self.eigenvalues, u_sel, u_site)
            sites[start:start + c] = s
            sizes[start:start + c] = z
        return sites, sizes

    def draw_streams(self, seed: int, n_samples: int, streams: int = 1, threads: int = 1):
        """Split ``n_samples`` over ``streams`` substreams; output is independent of ``threads``."""
        streams = max(1, int(streams))
        per = [n_samples // streams + (1 if i < n_samples % streams else 0) for i in range(streams)]
        jobs = [(RngStream(seed, i), k) for i, k in enumerate(per)]
        if threads > 1 and streams > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                parts = list(ex.map(lambda job: self.draw(*job), jobs))
        else:
            parts = [self.draw(*job) for job in jobs]
        return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def sample(Q, rng) -> PointConfiguration:
    """One configuration of the DPP with kernel matrix ``Q``."""
    sites, sizes = Sampler(Q).draw(rng, 1)
    n = Q.size if isinstance(Q, TransferredKernel) else np.asarray(Q).shape[0]
    return PointConfiguration(tuple(int(s) for s in sites[0, : sizes[0]]), n)


def block_counts(sites, sizes, blocks, n: int) -> np.ndarray:
    """``(n_samples, len(blocks))`` counts of sampled sites per block."""
    label = np.full(n + 1, -1, dtype=np.int64)
    for b, block in enumerate(blocks):
        label[list(block)] = b
    lab = label[np.where(sites >= 0, sites, n)]
    out = np.zeros((sites.shape[0], len(blocks)), dtype=np.int64)
    for b in range(len(blocks)):
        out[:, b] = (lab == b).sum(axis=1)
    return out


def _normalize_blocks(blocks, n):
    out = [list(b.indices) if isinstance(b, Cell) else [int(v) for v in b] for b in blocks]
    seen = set()
    for b in out:
        if seen & set(b):
            raise DomainError("blocks overlap")
        if b and (min(b) < 0 or max(b) >= n):
            raise DomainError("block index outside the kernel matrix")
        seen |= set(b)
    return out


def sample_counts(Q, blocks, rng, n_samples: int, streams: int = 1, threads: int = 1) -> CountLaw:
    """Empirical joint law of block counts over ``n_samples`` independent draws.

    With ``streams > 1`` the draws come from substreams of ``rng.seed``.
    """
    if isinstance(Q, TransferredKernel) and blocks is None:
        blocks = Q.block_indices()
    sampler = Sampler(Q)
    blocks = _normalize_blocks(blocks, sampler.n)
    if streams > 1:
        seed = rng.seed if isinstance(rng, RngStream) else int(rng)
        sites, sizes = sampler.draw_streams(seed, n_samples, streams, threads)
    else:
        sites, sizes = sampler.draw(rng, n_samples)
    counts = block_counts(sites, sizes, blocks, sampler.n)
    law = CountLaw.from_counts(counts, labels=tuple(tuple(b) for b in blocks), rank=sampler.rank)
    return law


def discretize_for_sampling(K: SpectralKernel, grid_cells: int, tol: float = 1e-3) -> TransferredKernel:
    """Transferred kernel on a uniform grid with one normalized indicator per cell.

    The leakage is the eigenfunction energy not captured by piecewise
    constants; it must stay below ``tol``.
    """
    if K.space.is_discrete:
        raise DomainError("discrete kernels are sampled directly")
    P = Partition.uniform(K.space, int(grid_cells))
    bases = [CellBasis(i, c, 1, 0.0, ((0, 0),)) for i, c in enumerate(P.cells)]
    tmap = build_transfer(K, bases)
    if tmap.leakage > tol:
        raise ToleranceError(
            f"grid of {grid_cells} cells leaks {tmap.leakage:.3g} > {tol:.3g}; use a finer grid",
            achieved=tmap.leakage, kind="leakage",
        )
    return transfer(K, tmap, tol)


def grid_midpoints(K: SpectralKernel, grid_cells: int) -> np.ndarray:
    edges = np.linspace(K.space.lo, K.space.hi, grid_cells + 1)
    return 0.5 * (edges[:-1] + edges[1:])


def configurations(sites, sizes):
    return [tuple(int(s) for s in row[:k]) for row, k in zip(sites, sizes)]


def samples_to_csv(sites, sizes) -> str:
    """One configuration per line, comma separated sorted sites."""
    buf = io.StringIO()
    for row, k in zip(sites, sizes):
        buf.write(",".join(str(int(s)) for s in row[:k]))
        buf.write("\n")
    return buf.getvalue()


def samples_from_csv(text: str):
    return [tuple(int(v) for v in line.split(",")) if line else () for line in text.splitlines()]


def samples_to_json(sites, sizes) -> str:
    return json.dumps({"configurations": [list(c) for c in configurations(sites, sizes)]})
