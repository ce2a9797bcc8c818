"""Exact and empirical joint laws of cell counts.

For cells ``A_1..A_m`` the probability generating function of the count
vector is ``det(I_r + sum_i (z_i - 1) G_i)`` where ``G_i`` is the Gram form
of the kernel compressed to ``A_i``.  Evaluating it on a grid of roots of
unity and applying a multidimensional DFT recovers the pmf exactly, because
the count in a cell never exceeds the rank (nor, on discrete spaces, the cell
size).
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaincc

from .errors import DomainError, SizeGuardError, ValidationError
from .ground import Cell, Partition
from .kernel import SpectralKernel, compress, spectrum
from .linalg import clamp_unit_spectrum, eigh
from .transference import TransferredKernel

GRID_LIMIT = 2_000_000
MAX_EXACT_RANK = 64
PMF_DUST = 1e-12
_RANK_TOL = 1e-12
_CHUNK_ENTRIES = 1 << 22


@dataclass(eq=False)
class CountLaw:
    """Dense pmf over count vectors; ``pmf[k1, ..., km] = P(counts = k)``."""

    labels: tuple
    pmf: np.ndarray
    rank: int | None = None
    provenance: str = "exact"
    n_samples: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def arity(self) -> int:
        return self.pmf.ndim

    def prob(self, counts) -> float:
        counts = tuple(int(c) for c in counts)
        if any(c < 0 or c >= s for c, s in zip(counts, self.pmf.shape)):
            return 0.0
        return float(self.pmf[counts])

    def atoms(self, threshold: float = 0.0):
        """``[(count_vector, probability), ...]`` for probabilities above ``threshold``."""
        idx = np.argwhere(self.pmf > threshold)
        return [(tuple(int(v) for v in k), float(self.pmf[tuple(k)])) for k in idx]

    def marginal(self, i: int) -> "CountLaw":
        axes = tuple(a for a in range(self.arity) if a != i)
        return self._derived((self.labels[i],), self.pmf.sum(axis=axes))

    def merge(self, groups) -> "CountLaw":
        """Law of the coordinate sums over each group of coordinates."""
        groups = [list(g) for g in groups]
        shape = tuple(sum(self.pmf.shape[a] - 1 for a in g) + 1 for g in groups)
        out = np.zeros(shape)
        for k in np.argwhere(self.pmf > 0):
            out[tuple(int(k[g].sum()) for g in groups)] += self.pmf[tuple(k)]
        labels = tuple("+".join(str(self.labels[a]) for a in g) for g in groups)
        return self._derived(labels, out)

    def total(self) -> "CountLaw":
        return self.merge([range(self.arity)])

    def _derived(self, labels, pmf):
        return CountLaw(labels, pmf, self.rank, self.provenance, self.n_samples)

    def to_rows(self, threshold: float = 0.0):
        return [list(k) + [p] for k, p in self.atoms(threshold)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([str(l) for l in self.labels] + ["probability"])
        for row in self.to_rows():
            w.writerow(row[:-1] + [repr(row[-1])])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "labels": [str(l) for l in self.labels],
            "shape": list(self.pmf.shape),
            "rank": self.rank,
            "provenance": self.provenance,
            "n_samples": self.n_samples,
            "atoms": self.to_rows(),
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "CountLaw":
        pmf = np.zeros(tuple(d["shape"]))
        for row in d["atoms"]:
            pmf[tuple(int(v) for v in row[:-1])] = row[-1]
        return cls(tuple(d["labels"]), pmf, d.get("rank"), d.get("provenance", "exact"),
                   d.get("n_samples"), d.get("meta", {}))

    @classmethod
    def from_counts(cls, counts, labels=None, rank=None) -> "CountLaw":
        """Empirical law of the rows of an ``(n_samples, m)`` count array."""
        counts = np.asarray(counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] == 0:
            raise ValidationError("need a non-empty (n_samples, m) count array")
        shape = tuple(int(s) for s in counts.max(axis=0) + 1)
        flat = np.ravel_multi_index(counts.T, shape)
        pmf = np.bincount(flat, minlength=int(np.prod(shape))).reshape(shape) / counts.shape[0]
        labels = tuple(range(counts.shape[1])) if labels is None else tuple(labels)
        return cls(labels, pmf, rank, "empirical", int(counts.shape[0]))


def _bernoulli_sum(probs) -> np.ndarray:
    pmf = np.array([1.0])
    for p in probs:
        nxt = np.zeros(len(pmf) + 1)
        nxt[:-1] += (1.0 - p) * pmf
        nxt[1:] += p * pmf
        pmf = nxt
    return pmf


def single_cell_law(C) -> CountLaw:
    """Count in one cell: a sum of independent Bernoulli(eigenvalue) variables."""
    w, _ = spectrum(C)
    pmf = _bernoulli_sum(w)
    label = getattr(C, "cell", None)
    return CountLaw((label.to_json() if label is not None else 0,), pmf, len(w))


def _check_disjoint(groups):
    seen = set()
    for g in groups:
        s = set(g)
        if s & seen:
            raise DomainError("cells/blocks overlap")
        seen |= s


def _gram_forms(kernel, cells):
    """Gram forms ``G_i`` in a common rank-r frame plus per-cell count caps."""
    if isinstance(kernel, TransferredKernel):
        if cells is None:
            cells = kernel.block_indices()
        kernel = kernel.Q
    if isinstance(kernel, SpectralKernel):
        K = kernel
        cells = [Cell.sites(c) if not isinstance(c, Cell) else c for c in cells]
        if K.space.is_discrete:
            _check_disjoint([c.indices for c in cells])
        else:
            for i in range(len(cells)):
                for j in range(i + 1, len(cells)):
                    if cells[i].overlaps(cells[j]):
                        raise DomainError(f"cells {i} and {j} overlap")
        forms = [compress(K, c).G for c in cells]
        caps = [min(K.rank, len(c.indices)) if c.is_discrete else K.rank for c in cells]
        labels = tuple(c.to_json() for c in cells)
        return forms, caps, K.rank, labels
    Q = np.asarray(kernel, dtype=float)
    if cells is None:
        raise ValidationError("blocks are required for a bare kernel matrix")
    blocks = [list(c.indices) if isinstance(c, Cell) else [int(v) for v in c] for c in cells]
    _check_disjoint(blocks)
    for b in blocks:
        if b and (min(b) < 0 or max(b) >= Q.shape[0]):
            raise DomainError("block index outside the kernel matrix")
    w, V = eigh(Q)
    w = clamp_unit_spectrum(w, 1e-10)
    keep = w > _RANK_TOL
    s = np.sqrt(w[keep])
    V = V[:, keep]
    forms = []
    for b in blocks:
        Vb = V[b]
        forms.append(s[:, None] * (Vb.T @ Vb) * s[None, :])
    r = int(keep.sum())
    caps = [min(r, len(b)) for b in blocks]
    return forms, caps, r, tuple(tuple(b) for b in blocks)


def pgf(kernel, cells, z) -> complex:
    """``E[prod_i z_i ** count_i]`` evaluated as a determinant."""
    forms, _, r, _ = _gram_forms(kernel, cells)
    M = np.eye(r, dtype=complex)
    for zi, G in zip(z, forms):
        M = M + (complex(zi) - 1.0) * G
    return complex(np.linalg.det(M)) if r else 1.0 + 0j


def joint_law(kernel, cells=None) -> CountLaw:
    """Exact joint pmf of the counts in disjoint ``cells``.

    ``kernel`` is a :class:`SpectralKernel` (cells are :class:`Cell`), a
    :class:`TransferredKernel` (blocks default to its own) or a symmetric
    matrix with index-list blocks.
    """
    forms, caps, r, labels = _gram_forms(kernel, cells)
    m = len(forms)
    if r > MAX_EXACT_RANK:
        raise SizeGuardError(f"rank {r} exceeds {MAX_EXACT_RANK}; use Monte Carlo")
    sizes = tuple(c + 1 for c in caps)
    total = int(np.prod(sizes, dtype=np.int64)) if m else 1
    if total > GRID_LIMIT:
        raise SizeGuardError(f"DFT grid of {total} points exceeds {GRID_LIMIT}; use Monte Carlo")
    if r == 0:
        pmf = np.zeros(sizes)
        pmf[(0,) * m] = 1.0
        return CountLaw(labels, pmf, 0, meta={"imag_residue": 0.0})
    Gstack = np.stack([G.reshape(-1) for G in forms]).astype(complex)  # (m, r*r)
    eye = np.eye(r, dtype=complex).reshape(-1)
    values = np.empty(total, dtype=complex)
    chunk = max(1, _CHUNK_ENTRIES // (r * r))
    roots = [np.exp(2j * np.pi * np.arange(s) / s) - 1.0 for s in sizes]
    for start in range(0, total, chunk):
        flat = np.arange(start, min(total, start + chunk))
        multi = np.unravel_index(flat, sizes)
        coef = np.stack([roots[i][multi[i]] for i in range(m)], axis=1)  # (chunk, m)
        mats = (eye[None, :] + coef @ Gstack).reshape(-1, r, r)
        values[start:start + len(flat)] = np.linalg.det(mats)
    raw = np.fft.fftn(values.reshape(sizes)) / total
    residue = float(np.abs(raw.imag).max())
    pmf = raw.real
    if pmf.min() < -PMF_DUST:
        raise ValidationError(f"negative probability {pmf.min():.3g} in exact count law")
    pmf = np.where(pmf < 0, 0.0, pmf)
    s = pmf.sum()
    if abs(s - 1.0) > 1e-9:
        raise ValidationError(f"count law sums to {s!r}")
    return CountLaw(labels, pmf, r, meta={"imag_residue": residue})


def _embed(pmf, shape):
    out = np.zeros(shape)
    out[tuple(slice(0, s) for s in pmf.shape)] = pmf
    return out


def tv_distance(a: CountLaw, b: CountLaw) -> float:
    if a.arity != b.arity:
        raise DomainError(f"laws have arities {a.arity} and {b.arity}")
    shape = tuple(max(x, y) for x, y in zip(a.pmf.shape, b.pmf.shape))
    d = 0.5 * float(np.abs(_embed(a.pmf, shape) - _embed(b.pmf, shape)).sum())
    return min(max(d, 0.0), 1.0)


@dataclass(frozen=True)
class VerifyReport:
    tv: float
    leakage: float
    rank: int
    bound: float
    imag_residue: float
    n_cells: int

    @property
    def ok(self) -> bool:
        return self.tv <= self.bound

    def to_dict(self) -> dict:
        return {"tv": self.tv, "leakage": self.leakage, "rank": self.rank, "bound": self.bound,
                "imag_residue": self.imag_residue, "n_cells": self.n_cells, "ok": self.ok}


def verify_transference(K: SpectralKernel, P: Partition, Q: TransferredKernel) -> VerifyReport:
    """TV distance between the cell-count law under ``K`` and the block law under ``Q``.

    The bound ``rank * leakage + 1e-8`` is a conservative engineering choice.
    """
    if len(Q.blocks) != len(P):
        raise ValidationError("transferred kernel has a different number of blocks")
    law_k = joint_law(K, list(P.cells))
    law_q = joint_law(Q)
    tv = tv_distance(law_k, law_q)
    residue = max(law_k.meta["imag_residue"], law_q.meta["imag_residue"])
    return VerifyReport(tv, Q.leakage, K.rank, K.rank * Q.leakage + 1e-8, residue, len(P))


@dataclass(frozen=True)
class ChiSquareReport:
    statistic: float
    dof: int
    p_value: float
    n_bins: int
    n_samples: int

    def passes(self, alpha: float = 1e-3) -> bool:
        return self.p_value > alpha

    def to_dict(self) -> dict:
        return {"chi2": self.statistic, "dof": self.dof, "p_value": self.p_value,
                "n_bins": self.n_bins, "n_samples": self.n_samples}


def empirical_vs_exact(law_exact: CountLaw, law_emp: CountLaw, min_expected: float = 5.0) -> ChiSquareReport:
    """Pearson chi-square of empirical counts against an exact law.

    Atoms with expected count below ``min_expected`` are pooled into one bin,
    which is kept only if it reaches ``min_expected`` itself (otherwise it is
    folded into the smallest regular bin).
    """
    if law_emp.n_samples is None:
        raise ValidationError("empirical law must record n_samples")
    if law_exact.arity != law_emp.arity:
        raise DomainError("laws have different arities")
    N = law_emp.n_samples
    shape = tuple(max(x, y) for x, y in zip(law_exact.pmf.shape, law_emp.pmf.shape))
    expected = _embed(law_exact.pmf, shape).reshape(-1) * N
    observed = np.rint(_embed(law_emp.pmf, shape).reshape(-1) * N)
    big = expected >= min_expected
    if not big.any():
        raise ValidationError("every expected count is below the minimum")
    exp_bins = list(expected[big])
    obs_bins = list(observed[big])
    rest_e, rest_o = float(expected[~big].sum()), float(observed[~big].sum())
    if rest_e == 0.0 and rest_o > 0:
        # mass on atoms the exact law forbids
        return ChiSquareReport(float("inf"), max(len(exp_bins) - 1, 1), 0.0, len(exp_bins), N)
    if rest_e >= min_expected:
        exp_bins.append(rest_e)
        obs_bins.append(rest_o)
    elif rest_e > 0 or rest_o > 0:
        j = int(np.argmin(exp_bins))
        exp_bins[j] += rest_e
        obs_bins[j] += rest_o
    e = np.asarray(exp_bins)
    o = np.asarray(obs_bins)
    stat = float(np.sum((o - e) ** 2 / e))
    dof = len(e) - 1
    p = 1.0 if dof == 0 else float(gammaincc(dof / 2.0, stat / 2.0))
    return ChiSquareReport(stat, dof, p, len(e), N)


def atom_zscores(law_exact: CountLaw, law_emp: CountLaw) -> np.ndarray:
    """Per-atom ``(p_hat - p) / sqrt(p (1 - p) / n)`` over the exact support."""
    N = law_emp.n_samples
    shape = tuple(max(x, y) for x, y in zip(law_exact.pmf.shape, law_emp.pmf.shape))
    p = _embed(law_exact.pmf, shape).reshape(-1)
    q = _embed(law_emp.pmf, shape).reshape(-1)
    keep = (p > 0) & (p < 1)
    se = np.sqrt(p[keep] * (1 - p[keep]) / N)
    return (q[keep] - p[keep]) / se

