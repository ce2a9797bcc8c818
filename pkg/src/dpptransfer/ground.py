"""Ground spaces, cells, partitions and composite Gauss-Legendre quadrature.

Two ground spaces are supported: a finite set ``{0, ..., n-1}`` with
counting measure and an interval ``[lo, hi]`` with Lebesgue measure.
Interval cells are finite unions of half-open pieces ``[a, b)``, so cells of a
partition are literally disjoint.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from numpy.polynomial import legendre as npleg

from .errors import DomainError, ValidationError

DEFAULT_QUAD_ORDER = 16
_EPS = 1e-12

FunctionRep = Union[Callable[[np.ndarray], np.ndarray], np.ndarray, Sequence[float]]


@dataclass(frozen=True)
class GroundSpace:
    kind: str
    size: int = 0
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if self.kind == "discrete":
            if int(self.size) < 1:
                raise ValidationError(f"discrete space needs size >= 1, got {self.size}")
        elif self.kind == "interval":
            if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
                raise ValidationError(f"interval needs lo < hi, got [{self.lo}, {self.hi}]")
        else:
            raise ValidationError(f"unknown ground space kind {self.kind!r}")

    @classmethod
    def discrete(cls, size: int) -> "GroundSpace":
        return cls("discrete", size=int(size))

    @classmethod
    def interval(cls, lo: float = 0.0, hi: float = 1.0) -> "GroundSpace":
        return cls("interval", lo=float(lo), hi=float(hi))

    @property
    def is_discrete(self) -> bool:
        return self.kind == "discrete"

    def whole(self) -> "Cell":
        if self.is_discrete:
            return Cell.sites(range(self.size))
        return Cell.interval((self.lo, self.hi))

    def contains_point(self, x) -> bool:
        if self.is_discrete:
            return float(x).is_integer() and 0 <= int(x) < self.size
        return self.lo <= x <= self.hi

    def to_dict(self) -> dict:
        if self.is_discrete:
            return {"kind": "discrete", "size": self.size}
        return {"kind": "interval", "lo": self.lo, "hi": self.hi}

    @classmethod
    def from_dict(cls, d: dict) -> "GroundSpace":
        if d.get("kind") == "discrete":
            return cls.discrete(d["size"])
        if d.get("kind") == "interval":
            return cls.interval(d.get("lo", 0.0), d.get("hi", 1.0))
        raise ValidationError(f"bad ground space descriptor {d!r}")


def _merge_pieces(pieces):
    out = []
    for a, b in sorted(pieces):
        if out and a <= out[-1][1] + _EPS:
            out[-1] = (out[-1][0], max(out[-1][1], b))
        else:
            out.append((a, b))
    return out


@dataclass(frozen=True)
class Cell:
    """A measurable window: sorted site indices or sorted half-open pieces."""

    kind: str
    indices: tuple = ()
    pieces: tuple = ()

    def __post_init__(self):
        if self.kind == "discrete":
            idx = tuple(sorted(int(i) for i in self.indices))
            if len(set(idx)) != len(idx):
                raise ValidationError("repeated site index in cell")
            object.__setattr__(self, "indices", idx)
        elif self.kind == "interval":
            ps = tuple(sorted((float(a), float(b)) for a, b in self.pieces))
            for a, b in ps:
                if not a < b:
                    raise ValidationError(f"empty or reversed piece [{a}, {b})")
            for (_, b0), (a1, _) in zip(ps, ps[1:]):
                if a1 < b0 - _EPS:
                    raise ValidationError("overlapping pieces in cell")
            object.__setattr__(self, "pieces", ps)
        else:
            raise ValidationError(f"unknown cell kind {self.kind!r}")

    @classmethod
    def sites(cls, indices) -> "Cell":
        return cls("discrete", indices=tuple(indices))

    @classmethod
    def interval(cls, *pieces) -> "Cell":
        return cls("interval", pieces=tuple(tuple(p) for p in pieces))

    @property
    def is_discrete(self) -> bool:
        return self.kind == "discrete"

    @property
    def measure(self) -> float:
        if self.is_discrete:
            return float(len(self.indices))
        return math.fsum(b - a for a, b in self.pieces)

    def contains(self, x) -> bool:
        if self.is_discrete:
            return int(x) in self.indices
        return any(a <= x < b for a, b in self.pieces)

    def indicator(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=bool)
        if self.is_discrete:
            return np.isin(x.astype(int), self.indices)
        for a, b in self.pieces:
            out |= (x >= a) & (x < b)
        return out

    def subset_of(self, other: "Cell") -> bool:
        if self.kind != other.kind:
            return False
        if self.is_discrete:
            return set(self.indices) <= set(other.indices)
        merged = _merge_pieces(other.pieces)
        return all(any(a >= c - _EPS and b <= d + _EPS for c, d in merged) for a, b in self.pieces)

    def overlaps(self, other: "Cell") -> bool:
        if self.is_discrete:
            return bool(set(self.indices) & set(other.indices))
        for a, b in self.pieces:
            for c, d in other.pieces:
                if min(b, d) - max(a, c) > _EPS:
                    return True
        return False

    def union(self, other: "Cell") -> "Cell":
        if self.is_discrete:
            return Cell.sites(sorted(set(self.indices) | set(other.indices)))
        return Cell.interval(*_merge_pieces(self.pieces + other.pieces))

    def check_in(self, space: GroundSpace) -> None:
        if self.is_discrete != space.is_discrete:
            raise DomainError("cell kind does not match ground space")
        if self.is_discrete:
            if self.indices and (self.indices[0] < 0 or self.indices[-1] >= space.size):
                raise DomainError(f"cell indices out of range for {space.size} sites")
        else:
            for a, b in self.pieces:
                if a < space.lo - _EPS or b > space.hi + _EPS:
                    raise DomainError(f"piece [{a}, {b}) outside [{space.lo}, {space.hi}]")

    def to_json(self):
        if self.is_discrete:
            return list(self.indices)
        return [[a, b] for a, b in self.pieces]


def measure(space: GroundSpace, cell: Cell) -> float:
    """Counting measure for discrete spaces, total length for intervals."""
    cell.check_in(space)
    return cell.measure


def union_of(cells: Sequence[Cell]) -> Cell:
    out = cells[0]
    for c in cells[1:]:
        out = out.union(c)
    return out


@dataclass(frozen=True)
class Partition:
    """Ordered disjoint cells whose union is ``window``.

    ``resolution`` is the largest cell diameter (interval) or cell size
    (discrete); separation of points only holds in the limit of refinement.
    """

    cells: tuple
    label: str = ""
    window: Cell = None

    def __post_init__(self):
        cells = tuple(self.cells)
        if not cells:
            raise ValidationError("partition needs at least one cell")
        kinds = {c.kind for c in cells}
        if len(kinds) != 1:
            raise ValidationError("partition mixes discrete and interval cells")
        for c in cells:
            if c.measure <= 0:
                raise ValidationError("partition cell of zero measure")
        for i in range(len(cells)):
            for j in range(i + 1, len(cells)):
                if cells[i].overlaps(cells[j]):
                    raise ValidationError(f"partition cells {i} and {j} overlap")
        union = union_of(cells)
        window = self.window if self.window is not None else union
        if not (union.subset_of(window) and window.subset_of(union)):
            raise ValidationError("cells do not cover the declared window")
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "window", window)

    def __len__(self):
        return len(self.cells)

    def __iter__(self):
        return iter(self.cells)

    def __getitem__(self, i):
        return self.cells[i]

    @property
    def kind(self) -> str:
        return self.cells[0].kind

    @property
    def resolution(self) -> float:
        if self.kind == "discrete":
            return float(max(len(c.indices) for c in self.cells))
        return max(c.pieces[-1][1] - c.pieces[0][0] for c in self.cells)

    def covers(self, space: GroundSpace) -> bool:
        whole = space.whole()
        return whole.subset_of(self.window) and self.window.subset_of(whole)

    @classmethod
    def uniform(cls, space: GroundSpace, m: int, label: str = "") -> "Partition":
        if space.is_discrete:
            chunks = np.array_split(np.arange(space.size), min(m, space.size))
            return cls(tuple(Cell.sites(c.tolist()) for c in chunks), label or f"uniform-{m}")
        edges = np.linspace(space.lo, space.hi, m + 1)
        edges[-1] = space.hi
        return cls(
            tuple(Cell.interval((edges[i], edges[i + 1])) for i in range(m)),
            label or f"uniform-{m}",
        )

    @classmethod
    def singletons(cls, space: GroundSpace) -> "Partition":
        if not space.is_discrete:
            raise DomainError("singleton partition needs a discrete space")
        return cls(tuple(Cell.sites([i]) for i in range(space.size)), "singletons")

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "cells": [c.to_json() for c in self.cells]}
        if self.label:
            d["label"] = self.label
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Partition":
        kind = d.get("kind")
        if kind == "interval":
            cells = tuple(Cell.interval(*[tuple(p) for p in c]) for c in d["cells"])
        elif kind == "discrete":
            cells = tuple(Cell.sites(c) for c in d["cells"])
        else:
            raise ValidationError(f"bad partition kind {kind!r}")
        return cls(cells, d.get("label", ""))


def _split_interval_cell(cell: Cell, factor: int):
    total = cell.measure
    cuts = [total * k / factor for k in range(1, factor)]
    children, current, acc = [], [], 0.0
    ci = 0
    for a, b in cell.pieces:
        start = a
        while ci < len(cuts) and acc + (b - start) > cuts[ci] + _EPS:
            x = start + (cuts[ci] - acc)
            if x - start > _EPS:
                current.append((start, x))
            if current:
                children.append(Cell.interval(*current))
            current = []
            acc = cuts[ci]
            start = x
            ci += 1
        if b - start > _EPS:
            current.append((start, b))
        acc += b - start
    if current:
        children.append(Cell.interval(*current))
    return children


def refine(coarse: Partition, factor: int) -> Partition:
    """Split every cell into ``factor`` children of equal measure.

    Discrete cells are split into contiguous chunks of sorted indices and
    become singletons once they have at most ``factor`` sites.
    """
    if int(factor) < 2:
        raise ValidationError("refinement factor must be >= 2")
    factor = int(factor)
    out = []
    for cell in coarse.cells:
        if cell.is_discrete:
            chunks = np.array_split(np.asarray(cell.indices), min(factor, len(cell.indices)))
            out.extend(Cell.sites(ch.tolist()) for ch in chunks)
        else:
            out.extend(_split_interval_cell(cell, factor))
    label = f"{coarse.label}/{factor}" if coarse.label else f"refined-{factor}"
    return Partition(tuple(out), label, coarse.window)


def ladder(base: Partition, levels: int, factor: int = 2) -> list:
    """``[base, refine(base), ...]`` with ``levels`` entries."""
    out = [base]
    for _ in range(levels - 1):
        out.append(refine(out[-1], factor))
    return out


@dataclass(frozen=True)
class Quadrature:
    """Composite Gauss-Legendre rule, ``order`` nodes on every piece of ``cell``."""

    cell: Cell
    order: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    piece_of_node: np.ndarray = field(repr=False)

    @classmethod
    def for_cell(cls, cell: Cell, order: int = DEFAULT_QUAD_ORDER) -> "Quadrature":
        if cell.is_discrete:
            idx = np.asarray(cell.indices, dtype=float)
            return cls(cell, 1, idx, np.ones_like(idx), np.arange(len(idx)))
        if order < 1:
            raise ValidationError("quadrature order must be >= 1")
        t, w = npleg.leggauss(order)
        nodes, weights, owner = [], [], []
        for p, (a, b) in enumerate(cell.pieces):
            half = 0.5 * (b - a)
            nodes.append(a + half * (t + 1.0))
            weights.append(half * w)
            owner.append(np.full(order, p))
        return cls(cell, order, np.concatenate(nodes), np.concatenate(weights), np.concatenate(owner))

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))


def _values(f: FunctionRep, quad: Quadrature) -> np.ndarray:
    if callable(f):
        return np.asarray(f(quad.nodes), dtype=float)
    vec = np.asarray(f, dtype=float)
    if not quad.cell.is_discrete:
        raise DomainError("vector function representations need a discrete cell")
    return vec[np.asarray(quad.cell.indices, dtype=int)]


def inner_product(f: FunctionRep, g: FunctionRep, cell: Cell, quad: Quadrature | None = None) -> float:
    """``(f, g)`` in L2 of ``cell``; an exact finite sum on discrete cells."""
    if quad is None:
        quad = Quadrature.for_cell(cell)
    if quad.cell != cell:
        raise DomainError("quadrature was built for a different cell")
    return quad.integrate(_values(f, quad) * _values(g, quad))


def legendre_basis(x: np.ndarray, degree: int, lo: float, hi: float) -> np.ndarray:
    """Orthonormal shifted Legendre polynomials on ``[lo, hi)`` at ``x``.

    Returns an array of shape ``(len(x), degree + 1)``.
    """
    x = np.asarray(x, dtype=float)
    t = 2.0 * (x - lo) / (hi - lo) - 1.0
    v = npleg.legvander(t, degree)
    scale = np.sqrt((2.0 * np.arange(degree + 1) + 1.0) / (hi - lo))
    return v * scale


def shifted_legendre(n: int, lo: float = 0.0, hi: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    """Degree-``n`` orthonormal Legendre polynomial on ``[lo, hi)`` as a callable."""

    def f(x):
        return legendre_basis(np.atleast_1d(x), n, lo, hi)[:, n]

    return f
