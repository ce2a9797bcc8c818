"""Jacobi eigensolver against an independent characteristic-polynomial oracle."""
import numpy as np
import pytest

from dpptransfer.errors import ValidationError
from dpptransfer.linalg import clamp_unit_spectrum, eigh, orthonormalize_rows

from conftest import random_contraction


def hessenberg(A):
    """Householder reduction to upper Hessenberg form (tridiagonal for symmetric A)."""
    H = np.array(A, dtype=float)
    n = H.shape[0]
    for k in range(n - 2):
        x = H[k + 1:, k].copy()
        alpha = -np.copysign(np.linalg.norm(x), x[0])
        v = x
        v[0] -= alpha
        nv = np.linalg.norm(v)
        if nv == 0:
            continue
        v /= nv
        H[k + 1:, :] -= 2.0 * np.outer(v, v @ H[k + 1:, :])
        H[:, k + 1:] -= 2.0 * np.outer(H[:, k + 1:] @ v, v)
    return H


def hyman_det(H, lam):
    """det(H - lam I) for upper Hessenberg H by Hyman's back-substitution."""
    n = H.shape[0]
    B = H - lam * np.eye(n)
    x = np.zeros(n)
    x[n - 1] = 1.0
    for i in range(n - 1, 0, -1):
        s = B[i, i:] @ x[i:]
        x[i - 1] = -s / B[i, i - 1]
    residual = B[0, :] @ x
    sign = (-1) ** (n - 1)
    return sign * residual * np.prod(np.diag(B, -1))


def char_roots(A, lo=-0.05, hi=1.05, grid=40001):
    H = hessenberg(A)
    xs = np.linspace(lo, hi, grid)
    vals = np.array([hyman_det(H, x) for x in xs])
    roots = []
    for i in np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0):
        a, b = xs[i], xs[i + 1]
        fa = hyman_det(H, a)
        for _ in range(80):
            m = 0.5 * (a + b)
            fm = hyman_det(H, m)
            if np.sign(fm) == np.sign(fa):
                a, fa = m, fm
            else:
                b = m
        roots.append(0.5 * (a + b))
    return np.sort(np.array(roots))[::-1]


def test_jacobi_matches_hyman_oracle_on_random_contraction():
    rng = np.random.default_rng(8)
    A = random_contraction(rng, 8)
    oracle = char_roots(A)
    assert len(oracle) == 8
    w, V = eigh(A)
    assert np.abs(w - oracle).max() <= 1e-8
    assert np.abs(V.T @ V - np.eye(8)).max() < 1e-12
    assert np.abs(A @ V - V * w).max() < 1e-10


@pytest.mark.parametrize("G, expected", [([[0.5]], [0.5]), ([[0.5, 0.5], [0.5, 0.5]], [1.0, 0.0])])
def test_small_examples(G, expected):
    w, _ = eigh(np.array(G))
    assert np.allclose(w, expected, atol=1e-15)


def test_backend_jacobi_convergence(core):
    rng = np.random.default_rng(1)
    X = rng.standard_normal((30, 30))
    A = np.ascontiguousarray(X + X.T)
    w, V, sweeps, off = core.jacobi_eigh(A, 1e-12, 100)
    fro = np.sqrt((A * A).sum())
    assert off < 1e-12 * fro
    assert sweeps < 20
    assert np.allclose(np.sort(w), np.linalg.eigvalsh(A), atol=1e-11)


def test_eigh_rejects_asymmetric():
    with pytest.raises(ValidationError):
        eigh(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_clamp_unit_spectrum():
    w = clamp_unit_spectrum([-5e-13, 0.3, 1 + 5e-13])
    assert w.tolist() == [0.0, 0.3, 1.0]
    with pytest.raises(ValidationError):
        clamp_unit_spectrum([-1e-9])
    with pytest.raises(ValidationError):
        clamp_unit_spectrum([1.01])


def test_orthonormalize_rows():
    C = np.array([[1.0, 1.0, 0.0], [1.0, 0.0, 1.0]])
    Q = orthonormalize_rows(C)
    assert np.allclose(Q @ Q.T, np.eye(2), atol=1e-15)
    with pytest.raises(ValidationError):
        orthonormalize_rows(np.array([[1.0, 2.0], [2.0, 4.0]]))
