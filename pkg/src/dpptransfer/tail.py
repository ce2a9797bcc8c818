"""Finite, empirical probes of tail behaviour.

Tail sigma-fields are infinite objects; what can be computed at desk scale is
how much information about a window ``A0`` survives in far-away data:

* :func:`tail_mixing_sweep` - expected TV between the law of ``xi(A0)`` given
  the exact configuration beyond radius ``R`` and its unconditional law;
* :func:`downward_martingale_probe` - ``E|P(event | H_n) - P(event)|`` where
  ``H_n`` is generated by counts on the rings at distance ``>= n``;
* :func:`levy_convergence` - ``E|P(event | counts on P_m) - 1_event|`` along a
  ladder of refining partitions.

Exact answers come from enumerating all ``2**n`` configurations through the
L-ensemble ``L = K (I - K)^-1``; Monte Carlo answers use the exact sampler.
Results are tables with standard errors, never a verdict.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .countlaw import CountLaw, tv_distance
from .errors import DomainError, ToleranceError, ValidationError
from .ground import Partition
from .kernel import SpectralKernel
from .linalg import clamp_unit_spectrum, eigh
from .sampling import RngStream, Sampler, block_counts
from .transference import TransferredKernel, transference

MAX_ENUM_SITES = 16
PROJECTION_SHRINK = 1e-6
MIN_STRATUM = 10


def kernel_matrix(K) -> np.ndarray:
    if isinstance(K, SpectralKernel):
        if not K.space.is_discrete:
            raise DomainError("tail probes need a discrete kernel; discretize first")
        return K.matrix()
    if isinstance(K, TransferredKernel):
        return K.Q
    return np.asarray(K, dtype=float)


@dataclass(eq=False)
class LEnsembleTable:
    """Probability of every subset; subset ``Y`` is the bitmask ``sum(2**s for s in Y)``."""

    n: int
    probs: np.ndarray
    shrink: float = 0.0
    _bits: np.ndarray | None = field(default=None, repr=False)

    @property
    def bits(self) -> np.ndarray:
        if self._bits is None:
            masks = np.arange(1 << self.n)
            self._bits = ((masks[:, None] >> np.arange(self.n)) & 1).astype(np.int8)
        return self._bits

    def prob(self, subset) -> float:
        return float(self.probs[sum(1 << int(s) for s in subset)])

    def marginals(self) -> np.ndarray:
        return self.probs @ self.bits

    def counts(self, sites) -> np.ndarray:
        return self.bits[:, list(sites)].sum(axis=1)


def _complement_determinants(K) -> np.ndarray:
    """``P(Y) = (-1)^|Y^c| det(K - I_{Y^c})`` for every bitmask ``Y``."""
    n = K.shape[0]
    masks = np.arange(1 << n)
    out = np.empty(len(masks))
    for start in range(0, len(masks), 4096):
        m = masks[start:start + 4096]
        absent = 1.0 - ((m[:, None] >> np.arange(n)) & 1)
        mats = np.broadcast_to(K, (len(m), n, n)).copy()
        mats[:, np.arange(n), np.arange(n)] -= absent
        out[start:start + len(m)] = np.linalg.det(mats) * (-1.0) ** absent.sum(axis=1)
    return out


def l_ensemble_enumerate(K, shrink: float | None = None) -> LEnsembleTable:
    """Exhaustive subset probabilities ``det(L_Y) / det(I + L)``.

    Needs ``||K|| <= 1 - 1e-8``; pass ``shrink=delta`` to enumerate
    ``(1 - delta) K`` instead (recorded on the table).  Shrunk tables are
    evaluated through the equivalent ``|det(K - I_{Y^c})|``, which stays
    accurate when ``L`` has eigenvalues near ``1 / delta``.
    """
    M = kernel_matrix(K)
    n = M.shape[0]
    if n > MAX_ENUM_SITES:
        raise ValidationError(f"enumeration limited to {MAX_ENUM_SITES} sites, got {n}")
    w, V = eigh(M)
    w = clamp_unit_spectrum(w, 1e-10)
    applied = 0.0
    if w.max(initial=0.0) >= 1.0 - 1e-8:
        if shrink is None:
            raise ValidationError("eigenvalue >= 1 - 1e-8: I - K is singular; shrink the kernel")
        applied = float(shrink)
        w = (1.0 - applied) * w
    if applied:
        # det(L_Y) cancels badly once L has eigenvalues near 1/delta
        probs = _complement_determinants((V * w) @ V.T)
    else:
        L = (V * (w / (1.0 - w))) @ V.T
        L = 0.5 * (L + L.T)
        dets = _backend.subset_determinants(np.ascontiguousarray(L))
        probs = dets * float(np.prod(1.0 - w))
    if probs.min() < -1e-12:
        raise ValidationError(f"negative subset probability {probs.min():.3g}")
    probs = np.where(probs < 0, 0.0, probs)
    if abs(probs.sum() - 1.0) > 1e-9:
        raise ValidationError(f"subset probabilities sum to {probs.sum()!r}")
    table = LEnsembleTable(n, probs, applied)
    target = (V * w) @ V.T
    if np.abs(table.marginals() - np.diag(target)).max() > 1e-9:
        raise ValidationError("enumerated marginals disagree with the kernel diagonal")
    return table


def table_for(K, shrink_projections: bool = True) -> LEnsembleTable:
    try:
        return l_ensemble_enumerate(K)
    except ValidationError:
        if not shrink_projections:
            raise
        return l_ensemble_enumerate(K, shrink=PROJECTION_SHRINK)


@dataclass(frozen=True)
class CountEvent:
    """Predicate on the total count over ``cells`` (columns of a count array).

    ``kind`` is one of ``at_least``, ``at_most``, ``equals``, ``parity``
    (count even when ``value`` is 0, odd when 1).
    """

    cells: tuple
    kind: str = "at_least"
    value: int = 1

    def __post_init__(self):
        if self.kind not in ("at_least", "at_most", "equals", "parity"):
            raise ValidationError(f"unknown event kind {self.kind!r}")

    def __call__(self, counts) -> np.ndarray:
        counts = np.atleast_2d(np.asarray(counts))
        total = counts[:, list(self.cells)].sum(axis=1)
        if self.kind == "at_least":
            return total >= self.value
        if self.kind == "at_most":
            return total <= self.value
        if self.kind == "equals":
            return total == self.value
        return (total % 2) == (self.value % 2)

    def to_dict(self) -> dict:
        return {"cells": list(self.cells), "kind": self.kind, "value": self.value}


@dataclass
class ResultTable:
    """Rows of ``(parameter, estimate, std_error, n_effective)`` plus run metadata."""

    parameter_name: str
    rows: list
    meta: dict = field(default_factory=dict)

    @property
    def parameters(self):
        return [r[0] for r in self.rows]

    @property
    def estimates(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows], dtype=float)

    @property
    def std_errors(self) -> np.ndarray:
        return np.array([r[2] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["parameter", "estimate", "std_error", "n_effective"])
        for p, est, se, n in self.rows:
            w.writerow([p, repr(float(est)), repr(float(se)), int(n)])
        return buf.getvalue()

    def increases(self, n_se: float = 3.0) -> list:
        """Indices where the estimate rises by more than ``n_se`` pooled standard errors."""
        est, se = self.estimates, self.std_errors
        out = []
        for i in range(len(est) - 1):
            pooled = float(np.hypot(se[i], se[i + 1]))
            if est[i + 1] - est[i] > n_se * pooled + 1e-12:
                out.append(i)
        return out


def _pattern_ids(bits_sub) -> np.ndarray:
    if bits_sub.shape[1] == 0:
        return np.zeros(bits_sub.shape[0], dtype=np.int64)
    _, inv = np.unique(bits_sub, axis=0, return_inverse=True)
    return inv.reshape(-1)


def conditional_law(K, far_config, near, method: str = "exact", rng=None, n_draws: int = 100_000,
                    table: LEnsembleTable | None = None) -> CountLaw:
    """Law of ``xi(near)`` given the occupancy of the far sites.

    ``far_config`` maps site -> 0/1.  ``method="exact"`` renormalizes the
    enumerated table; ``method="rejection"`` keeps sampled configurations that
    match the far pattern and reports the acceptance rate.
    """
    far = sorted(int(s) for s in far_config)
    pattern = np.array([int(bool(far_config[s])) for s in far], dtype=np.int8)
    near = sorted(int(s) for s in near)
    if set(far) & set(near):
        raise DomainError("near and far sites overlap")
    M = kernel_matrix(K)
    n = M.shape[0]
    if any(s < 0 or s >= n for s in far + near):
        raise DomainError("site outside the kernel")
    if method == "exact":
        table = table or table_for(M)
        match = np.all(table.bits[:, far] == pattern, axis=1) if far else np.ones(len(table.probs), bool)
        p_event = float(table.probs[match].sum())
        if p_event < 1e-12:
            raise ValidationError(f"conditioning event has probability {p_event:.3g}")
        nc = table.counts(near)[match]
        pmf = np.bincount(nc, weights=table.probs[match], minlength=len(near) + 1) / p_event
        return CountLaw((tuple(near),), pmf, meta={"event_probability": p_event, "shrink": table.shrink})
    if method == "rejection":
        sampler = Sampler(M)
        sites, sizes = sampler.draw(rng if rng is not None else RngStream(0), n_draws)
        occ = block_counts(sites, sizes, [[s] for s in range(n)], n)
        match = np.all(occ[:, far] == pattern, axis=1) if far else np.ones(n_draws, bool)
        acc = int(match.sum())
        if acc == 0:
            raise ValidationError("no sampled configuration matched the far pattern")
        nc = occ[match][:, near].sum(axis=1)
        law = CountLaw((tuple(near),), np.bincount(nc, minlength=len(near) + 1) / acc,
                       provenance="empirical", n_samples=acc)
        law.meta = {"acceptance_rate": acc / n_draws, "n_accepted": acc, "n_draws": n_draws}
        return law
    raise ValidationError(f"unknown method {method!r}")


def site_distances(near, n: int) -> np.ndarray:
    near = np.asarray(sorted(near))
    return np.abs(np.arange(n)[:, None] - near[None, :]).min(axis=1)


@dataclass
class TailPlan:
    """Near window, far radii and Monte Carlo budget for the tail probes.

    Far data at radius ``R`` is the occupancy of every site whose distance to
    the near window exceeds ``R``.  ``ladder_levels``/``refine_factor``
    describe the partition ladder used by the Levy probe.
    """

    kernel: object
    near: tuple
    radii: tuple
    n_samples: int = 100_000
    seed: int = 0
    ladder_levels: int = 3
    refine_factor: int = 2

    def __post_init__(self):
        self.near = tuple(sorted(int(s) for s in self.near))
        self.radii = tuple(int(r) for r in self.radii)
        if not self.near:
            raise ValidationError("near window is empty")
        if any(b <= a for a, b in zip(self.radii, self.radii[1:])):
            raise ValidationError("radii must be strictly increasing")
        if self.radii and self.radii[0] < 0:
            raise ValidationError("radii must be non-negative")
        n = self.size
        if self.near[0] < 0 or self.near[-1] >= n:
            raise DomainError("near window outside the ground set")

    @property
    def matrix(self) -> np.ndarray:
        return kernel_matrix(self.kernel)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def far_sites(self, radius: int) -> list:
        d = site_distances(self.near, self.size)
        return [int(s) for s in np.flatnonzero(d > radius)]

    def rings(self) -> list:
        """``C_k`` = sites at distance exactly ``k`` from the near window, ``k >= 1``."""
        d = site_distances(self.near, self.size)
        return [[int(s) for s in np.flatnonzero(d == k)] for k in range(1, int(d.max(initial=0)) + 1)]

    def to_dict(self) -> dict:
        return {"near": list(self.near), "radii": list(self.radii), "n_samples": self.n_samples,
                "seed": self.seed, "ladder_levels": self.ladder_levels,
                "refine_factor": self.refine_factor}


def tail_mixing_sweep(plan: TailPlan, method: str = "exact") -> ResultTable:
    """``E[TV(law(xi(A0) | far config beyond R), law(xi(A0)))]`` for each radius.

    ``method="exact"`` weights every far pattern by its probability;
    ``method="sampled"`` averages over far patterns of sampled configurations
    and reports the Monte Carlo standard error.
    """
    M = plan.matrix
    table = table_for(M)
    near = list(plan.near)
    nc = table.counts(near)
    k_max = len(near) + 1
    uncond = np.bincount(nc, weights=table.probs, minlength=k_max)
    if method == "sampled":
        sampler = Sampler(M)
        sites, sizes = sampler.draw(RngStream(plan.seed), plan.n_samples)
        occ = block_counts(sites, sizes, [[s] for s in range(plan.size)], plan.size)
        weights_occ = 1 << np.arange(plan.size)
    rows = []
    for R in plan.radii:
        far = plan.far_sites(R)
        if not far:
            rows.append((R, 0.0, 0.0, plan.n_samples if method == "sampled" else 0))
            continue
        ids = _pattern_ids(table.bits[:, far])
        n_pat = int(ids.max()) + 1
        joint = np.zeros((n_pat, k_max))
        np.add.at(joint, (ids, nc), table.probs)
        p_pat = joint.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            cond = joint / p_pat[:, None]
        tv = 0.5 * np.abs(cond - uncond[None, :]).sum(axis=1)
        tv[p_pat <= 0] = 0.0
        if method == "exact":
            rows.append((R, float(np.dot(p_pat, tv)), 0.0, int((p_pat > 0).sum())))
        elif method == "sampled":
            # pattern id of each sampled configuration, via the table row of its subset
            masks = occ @ weights_occ
            vals = tv[ids[masks]]
            rows.append((R, float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(len(vals))), len(vals)))
        else:
            raise ValidationError(f"unknown method {method!r}")
    meta = {"near": near, "method": method, "shrink": table.shrink}
    return ResultTable("radius", rows, meta)


def _stratified_gap(keys, indicator, parent_estimate=None, parent_se=None):
    """Stratified conditional frequencies with starved strata pooled.

    A stratum with fewer than ``MIN_STRATUM`` samples takes ``parent_estimate``
    (per sample; the overall frequency by default) instead.  Returns
    ``(per-sample estimates, their binomial standard errors, n_starved_samples)``.
    """
    _, inv, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inv = inv.reshape(-1)
    sums = np.bincount(inv, weights=indicator.astype(float))
    p = sums / counts
    est = p[inv]
    se = np.sqrt(p * (1.0 - p) / counts)[inv]
    starved = counts[inv] < MIN_STRATUM
    if starved.all():
        raise ValidationError("every stratum has fewer than 10 samples")
    if parent_estimate is None:
        n = len(indicator)
        parent_estimate = np.full(n, indicator.mean())
        parent_se = np.full(n, np.sqrt(indicator.mean() * (1.0 - indicator.mean()) / n))
    est = np.where(starved, parent_estimate, est)
    se = np.where(starved, parent_se, se)
    return est, se, int(starved.sum())


def _gap_row(param, vals, se_cond):
    """Mean of a plug-in gap; its error combines the outer average and the stratum estimates."""
    n = len(vals)
    se = float(np.hypot(vals.std(ddof=1) / np.sqrt(n), se_cond.mean()))
    return (param, float(vals.mean()), se, n)


def downward_martingale_probe(plan: TailPlan, event: CountEvent | None = None,
                              method: str = "exact") -> ResultTable:
    """``E|P(event | H_n) - P(event)|`` with ``H_n`` = counts on rings ``C_k``, ``k >= n``.

    The default event is "``xi(A0)`` is odd".  Rings run out at the largest
    distance, after which ``H_n`` is trivial and the gap is 0.
    """
    event = event or CountEvent(plan.near, "parity", 1)
    rings = plan.rings()
    levels = list(range(1, len(rings) + 2))
    rows = []
    if method == "exact":
        table = table_for(plan.matrix)
        ind = event(table.bits)
        pa = float(np.dot(table.probs, ind))
        for n in levels:
            use = rings[n - 1:]
            if not use:
                rows.append((n, 0.0, 0.0, 1))
                continue
            key = np.stack([table.counts(c) for c in use], axis=1)
            ids = _pattern_ids(key)
            p_g = np.bincount(ids, weights=table.probs)
            p_ag = np.bincount(ids, weights=table.probs * ind)
            with np.errstate(invalid="ignore", divide="ignore"):
                cond = np.where(p_g > 0, p_ag / p_g, pa)
            rows.append((n, float(np.dot(p_g, np.abs(cond - pa))), 0.0, int((p_g > 0).sum())))
        meta = {"method": method, "event": event.to_dict(), "p_event": pa, "shrink": table.shrink}
        return ResultTable("n", rows, meta)
    if method != "empirical":
        raise ValidationError(f"unknown method {method!r}")
    M = plan.matrix
    sampler = Sampler(M)
    sites, sizes = sampler.draw(RngStream(plan.seed), plan.n_samples)
    occ = block_counts(sites, sizes, [[s] for s in range(plan.size)], plan.size)
    ind = event(occ)
    pa = float(ind.mean())
    starved_total = {}
    for n in levels:
        use = rings[n - 1:]
        if not use:
            rows.append((n, 0.0, 0.0, len(ind)))
            continue
        key = np.stack([occ[:, c].sum(axis=1) for c in use], axis=1)
        est, se_cond, starved = _stratified_gap(key, ind)
        rows.append(_gap_row(n, np.abs(est - pa), se_cond))
        starved_total[n] = starved
    meta = {"method": method, "event": event.to_dict(), "p_event": pa, "starved": starved_total}
    return ResultTable("n", rows, meta)


def _membership(fine: Partition, coarse: Partition) -> np.ndarray:
    """``A[j, c] = 1`` when fine cell ``j`` lies inside coarse cell ``c``."""
    A = np.zeros((len(fine), len(coarse)), dtype=np.int64)
    for j, f in enumerate(fine.cells):
        hits = [c for c, cc in enumerate(coarse.cells) if f.subset_of(cc)]
        if len(hits) != 1:
            raise ValidationError("ladder is not nested: a fine cell straddles coarse cells")
        A[j, hits[0]] = 1
    return A


def ladder_counts(K, ladder, n_samples: int, seed: int, tol: float = 1e-10, streams: int = 1,
                  threads: int = 1):
    """Sampled counts on the finest ladder level, shape ``(n_samples, len(ladder[-1]))``.

    Interval kernels are sampled through their transferred kernel on the
    finest partition, whose block counts have the law of the cell counts.
    """
    finest = ladder[-1]
    if isinstance(K, SpectralKernel) and not K.space.is_discrete:
        Q = transference(K, finest, tol)
        M, blocks = Q.Q, Q.block_indices()
        meta = {"leakage": Q.leakage, "transferred_size": Q.size}
    else:
        M = kernel_matrix(K)
        blocks = [list(c.indices) for c in finest.cells]
        meta = {}
    sampler = Sampler(M)
    sites, sizes = sampler.draw_streams(seed, n_samples, streams, threads)
    return block_counts(sites, sizes, blocks, sampler.n), meta


def levy_convergence(K, ladder, event: CountEvent, n_samples: int = 100_000, seed: int = 0,
                     tol: float = 1e-10, streams: int = 1, threads: int = 1) -> ResultTable:
    """``E|P(event | counts on P_m) - 1_event|`` for ``m = 1..M``.

    ``event`` reads counts of the finest level ``P_M``.  Conditional
    probabilities are stratified sample frequencies; strata with fewer than
    10 samples borrow the estimate of their parent stratum one level up
    (level 0 is the unconditional frequency).  At ``m = M`` the event is a
    function of the stratum key, so the error is 0.
    """
    ladder = list(ladder)
    if not ladder:
        raise ValidationError("empty partition ladder")
    counts, meta = ladder_counts(K, ladder, n_samples, seed, tol, streams, threads)
    ind = event(counts)
    M = len(ladder)
    finest = ladder[-1]
    parent = np.full(len(ind), ind.mean())
    parent_se = np.full(len(ind), np.sqrt(ind.mean() * (1.0 - ind.mean()) / len(ind)))
    rows = []
    starved_by_level = {}
    for m, P in enumerate(ladder, start=1):
        key = counts @ _membership(finest, P)
        if m == M:
            _, inv = np.unique(key, axis=0, return_inverse=True)
            inv = inv.reshape(-1)
            lo = np.full(inv.max() + 1, True)
            hi = np.full(inv.max() + 1, False)
            np.logical_and.at(lo, inv, ind)
            np.logical_or.at(hi, inv, ind)
            if np.any(lo != hi):
                raise ValidationError("event is not determined by counts on the finest level")
            rows.append((m, 0.0, 0.0, len(ind)))
            starved_by_level[m] = 0
            continue
        est, se_cond, starved = _stratified_gap(key, ind, parent, parent_se)
        rows.append(_gap_row(m, np.abs(est - ind), se_cond))
        starved_by_level[m] = starved
        parent, parent_se = est, se_cond
    meta.update({"event": event.to_dict(), "p_event": float(ind.mean()), "starved": starved_by_level,
                 "levels": [len(P) for P in ladder]})
    return ResultTable("m", rows, meta)
