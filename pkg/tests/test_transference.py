import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import legendre as npleg
from scipy.integrate import quad

from conftest import random_contraction
from dpptransfer.countlaw import joint_law, tv_distance
from dpptransfer.errors import DomainError, ToleranceError
from dpptransfer.ground import Cell, GroundSpace, Partition
from dpptransfer.kernel import (compress, constant_rank1, diag, fourier_mixed, fourier_projection,
                                from_matrix, legendre_mixed)
from dpptransfer.linalg import eigh
from dpptransfer.transference import (TransferredKernel, apply_transfer, build_cell_bases, build_transfer,
                                      spectrum_check, transfer, transference)

UNIT = GroundSpace.interval()
HALVES = Partition.uniform(UNIT, 2)
UNEVEN = Partition((Cell.interval((0.0, 0.2), (0.7, 1.0)), Cell.interval((0.2, 0.45)),
                    Cell.interval((0.45, 0.7))))


def trig(k):
    """Closed-form eigenfunctions of the Fourier presets, independent of their Legendre expansion."""
    f = (k + 1) // 2
    if k == 0:
        return lambda x: 1.0
    if k % 2 == 1:
        return lambda x: math.sqrt(2) * math.cos(2 * math.pi * f * x)
    return lambda x: math.sqrt(2) * math.sin(2 * math.pi * f * x)


def legendre_on(a, b, d):
    c = np.zeros(d + 1)
    c[d] = math.sqrt((2 * d + 1) / (b - a))
    return lambda x: npleg.legval(2 * (x - a) / (b - a) - 1, c)


def residual_oracle(lam, funcs, basis):
    """Weighted energy of each function left outside the span of ``basis`` on the cell, by adaptive quadrature."""
    total = 0.0
    for l, f in zip(lam, funcs):
        energy = sum(quad(lambda x: f(x) ** 2, a, b, epsabs=1e-14, epsrel=1e-14)[0] for a, b in basis.cell.pieces)
        captured = 0.0
        for d, p in basis.terms[: basis.n]:
            a, b = basis.cell.pieces[p]
            w = legendre_on(a, b, d)
            captured += quad(lambda x: f(x) * w(x), a, b, epsabs=1e-14, epsrel=1e-14, limit=200)[0] ** 2
        total += l * (energy - captured)
    return total


# ---------------------------------------------------------------- cell bases

def test_discrete_bases_are_standard_vectors():
    K = from_matrix(random_contraction(np.random.default_rng(1), 4))
    P = Partition((Cell.sites([0, 1]), Cell.sites([2, 3])))
    bases = build_cell_bases(K, P)
    assert [b.n for b in bases] == [2, 2]
    assert [b.residual for b in bases] == [0.0, 0.0]
    assert np.array_equal(bases[1].values(np.arange(4)), np.array([[0, 0], [0, 0], [1, 0], [0, 1]]))


def test_constant_kernel_needs_one_function_per_half():
    for tol in (1e-2, 1e-10, 1e-15):
        bases = build_cell_bases(constant_rank1(), HALVES, tol)
        assert [b.n for b in bases] == [1, 1]


def test_fourier_residual_matches_quadrature_oracle():
    K = fourier_projection(3)
    tol = 1e-10
    bases = build_cell_bases(K, HALVES, tol)
    funcs = [trig(k) for k in range(3)]
    for b in bases:
        oracle = residual_oracle(K.eigenvalues, funcs, b)
        assert oracle <= tol / 2 + 1e-13
        assert b.residual == pytest.approx(oracle, abs=1e-12)
        # one fewer function would have broken the per-cell budget
        short = type(b)(b.index, b.cell, b.n - 1, 0.0, b.terms)
        assert residual_oracle(K.eigenvalues, funcs, short) > tol / 2


def test_bases_are_orthonormal_and_vanish_off_cell():
    K = fourier_mixed([0.9, 0.7, 0.5, 0.3, 0.2, 0.1])
    bases = build_cell_bases(K, UNEVEN, 1e-10)
    x = np.linspace(0, 1, 2001)[:-1]
    for b in bases:
        inside = np.array([b.cell.contains(v) for v in x])
        assert np.all(b.values(x[~inside]) == 0.0)
        G = np.zeros((b.n, b.n))
        for a, c in b.cell.pieces:
            xs, ws = npleg.leggauss(64)
            xs = 0.5 * (c - a) * xs + 0.5 * (c + a)
            V = b.values(xs)
            G += (V * (0.5 * (c - a) * ws)[:, None]).T @ V
        assert np.allclose(G, np.eye(b.n), atol=1e-10)


def test_unreachable_tolerance_carries_achieved_residual():
    with pytest.raises(ToleranceError) as err:
        build_cell_bases(fourier_projection(3), HALVES, tol=1e-40, max_degree=4)
    assert err.value.kind == "leakage"
    assert err.value.achieved > 1e-40


def test_partition_must_cover_the_space():
    with pytest.raises(DomainError):
        build_cell_bases(constant_rank1(), Partition((Cell.interval((0.0, 0.5)),)))


# ---------------------------------------------------------------- transfer map

def test_identity_partition_gives_identity_map():
    K = diag(0.3, 0.7)
    tmap = build_transfer(K, build_cell_bases(K, Partition.singletons(K.space)))
    assert np.array_equal(tmap.T, np.eye(2))


def test_constant_kernel_transfer_column():
    tmap = build_transfer(constant_rank1(), build_cell_bases(constant_rank1(), HALVES))
    assert np.allclose(tmap.T[:, 0], [1 / math.sqrt(2), 1 / math.sqrt(2)], atol=1e-15)
    assert tmap.leakage < 1e-15


def test_full_window_basis_of_eigenfunctions_is_identity():
    K = legendre_mixed([0.9, 0.5, 0.2])
    P = Partition((UNIT.whole(),))
    tmap = build_transfer(K, build_cell_bases(K, P))
    assert np.allclose(tmap.T, np.eye(3), atol=1e-13)


def test_column_norms_and_leakage():
    K = fourier_mixed([0.9, 0.7, 0.5, 0.3, 0.2, 0.1])
    tmap = build_transfer(K, build_cell_bases(K, UNEVEN, 1e-10))
    assert np.all(tmap.column_norms <= 1 + 1e-10)
    assert np.all(tmap.column_norms >= 1 - 1e-9)
    assert tmap.leakage <= 1e-10
    assert tmap.leakage == pytest.approx(float(np.sum(K.eigenvalues * (1 - tmap.column_norms))), abs=1e-15)


# ---------------------------------------------------------------- transferred kernel

def test_constant_kernel_transfers_to_half_matrix():
    Q = transference(constant_rank1(), HALVES)
    assert np.allclose(Q.Q, [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)
    assert Q.blocks == ((0, 1), (1, 1))


def test_diagonal_kernel_transfers_to_itself():
    K = diag(0.3, 0.7)
    Q = transference(K, Partition.singletons(K.space))
    assert np.array_equal(Q.Q, np.diag([0.3, 0.7]))


def test_discrete_singletons_reproduce_kernel():
    K = from_matrix(random_contraction(np.random.default_rng(5), 7))
    Q = transference(K, Partition.singletons(K.space))
    assert np.allclose(Q.Q, K.matrix(), atol=1e-15)
    assert Q.leakage == 0.0


def test_transfer_refuses_excess_leakage():
    K = fourier_projection(3)
    bases = build_cell_bases(K, HALVES, 1e-3)
    tmap = build_transfer(K, bases)
    assert tmap.leakage > 1e-12
    with pytest.raises(ToleranceError) as err:
        transfer(K, tmap, tol=tmap.leakage / 10)
    assert err.value.kind == "leakage"


def test_transferred_kernel_json_round_trip():
    Q = transference(fourier_projection(3), Partition.uniform(UNIT, 3))
    back = TransferredKernel.from_dict(json.loads(json.dumps(Q.to_dict())))
    assert np.array_equal(back.Q, Q.Q)
    assert back.blocks == Q.blocks
    assert back.leakage == Q.leakage and back.tol == Q.tol


def test_transferred_spectrum_is_in_unit_interval():
    Q = transference(fourier_mixed([0.9, 0.7, 0.5, 0.3, 0.2, 0.1]), UNEVEN)
    assert np.allclose(Q.Q, Q.Q.T, atol=0)
    w, _ = eigh(Q.Q)
    assert w.min() >= -1e-10 and w.max() <= 1 + 1e-10


# ---------------------------------------------------------------- spectrum check

def test_spectrum_check_examples():
    K = constant_rank1()
    rep = spectrum_check(K, transference(K, HALVES))
    assert rep.discrepancy < 1e-15 and rep.ok
    D = diag(0.3, 0.7)
    assert spectrum_check(D, D.matrix()).discrepancy < 1e-15
    F = fourier_projection(3)
    rep = spectrum_check(F, transference(F, Partition.uniform(UNIT, 4), 1e-10))
    assert rep.discrepancy <= 1e-8 and rep.ok


# ---------------------------------------------------------------- structural invariants

def _span_function(K, c):
    return lambda x: K.eigenfunction_values(x) @ c


@pytest.mark.parametrize("K,P", [
    (fourier_projection(3), Partition.uniform(UNIT, 4)),
    (fourier_mixed([0.9, 0.7, 0.5, 0.3, 0.2, 0.1]), UNEVEN),
])
def test_intertwining(K, P):
    bases = build_cell_bases(K, P, 1e-10)
    tmap = build_transfer(K, bases)
    rng = np.random.default_rng(11)
    for _ in range(100):
        c = rng.standard_normal(K.rank)
        c /= np.linalg.norm(c)
        Tphi = tmap.apply_coefficients(c)
        phi = _span_function(K, c)
        for i, cell in enumerate(P.cells):
            restricted = apply_transfer(bases, lambda x: cell.indicator(x) * phi(x))
            expect = np.zeros_like(Tphi)
            rows = tmap.block_rows(i)
            expect[rows] = Tphi[rows]
            assert np.allclose(restricted, expect, atol=1e-10)


def test_inner_products_are_preserved():
    K = fourier_mixed([0.9, 0.7, 0.5, 0.3, 0.2, 0.1])
    bases = build_cell_bases(K, UNEVEN, 1e-10)
    tmap = build_transfer(K, bases)
    rng = np.random.default_rng(12)
    for _ in range(10):
        a, b = rng.standard_normal((2, K.rank))
        Ta, Tb = tmap.apply_coefficients(a), tmap.apply_coefficients(b)
        for i, cell in enumerate(UNEVEN.cells):
            lhs = _cell_inner(K, cell, a, b)
            rows = tmap.block_rows(i)
            assert lhs == pytest.approx(float(Ta[rows] @ Tb[rows]), abs=1e-9)


def _cell_inner(K, cell, a, b):
    total = 0.0
    for lo, hi in cell.pieces:
        total += quad(lambda x: float(K.eigenfunction_values(x)[0] @ a) * float(K.eigenfunction_values(x)[0] @ b),
                      lo, hi, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    return total


@pytest.mark.parametrize("m", [1, 2, 3])
def test_eigenvector_transport(m):
    K = fourier_mixed([0.9, 0.7, 0.5, 0.3, 0.2, 0.1])
    P = Partition.uniform(UNIT, 4)
    Qk = transference(K, P, 1e-10)
    tmap = Qk.transfer_map
    E = P.cells[0]
    for c in P.cells[1:m]:
        E = E.union(c)
    C = compress(K, E)
    w, V = eigh(C.G)
    rows = np.concatenate([tmap.block_rows(i) for i in range(m)])
    QF = Qk.Q[np.ix_(rows, rows)]
    for lam, v in zip(w, V.T):
        if lam < 1e-12:
            continue
        # G = sqrt(lam) M sqrt(lam): the function is sum_k sqrt(lam_k) v_k phi_k restricted to E_m
        u = tmap.T[rows] @ (np.sqrt(K.eigenvalues) * v) / math.sqrt(lam)
        assert np.allclose(QF @ u, lam * u, atol=Qk.leakage + 1e-8)


@pytest.mark.parametrize("rank", [2, 3, 5])
def test_projection_stays_idempotent(rank):
    Q = transference(fourier_projection(rank), UNEVEN, 1e-10)
    assert np.abs(Q.Q @ Q.Q - Q.Q).max() <= Q.leakage + 1e-8


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**32 - 1), st.data())
def test_discrete_transfer_permutes_coordinates(n, seed, data):
    rng = np.random.default_rng(seed)
    K = from_matrix(random_contraction(rng, n))
    labels = data.draw(st.lists(st.integers(0, 2), min_size=n, max_size=n))
    groups = [[s for s in range(n) if labels[s] == g] for g in range(3)]
    groups = [g for g in groups if g]
    P = Partition(tuple(Cell.sites(g) for g in groups))
    Q = transference(K, P)
    order = [s for g in groups for s in g]
    assert np.allclose(Q.Q, K.matrix()[np.ix_(order, order)], atol=1e-14)
    assert tv_distance(joint_law(K, list(P.cells)), joint_law(Q)) < 1e-10
