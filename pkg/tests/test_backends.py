import itertools
import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import random_contraction
from dpptransfer import _backend

both = pytest.mark.skipif(len(_backend.IMPLEMENTATIONS) < 2, reason="compiled core not built")


def test_subset_determinants_against_numpy(core):
    L = random_contraction(np.random.default_rng(1), 6, lo=0.1, hi=3.0)
    dets = core.subset_determinants(np.ascontiguousarray(L))
    assert dets[0] == 1.0
    for mask in range(1, 64):
        idx = [s for s in range(6) if mask >> s & 1]
        assert dets[mask] == pytest.approx(np.linalg.det(L[np.ix_(idx, idx)]), rel=1e-12, abs=1e-14)


def test_sample_batch_shapes(core):
    rng = np.random.default_rng(2)
    V, _ = np.linalg.qr(rng.standard_normal((9, 4)))
    lam = np.array([1.0, 0.8, 0.5, 0.1])
    u1, u2 = rng.random((1000, 4)), rng.random((1000, 4))
    sites, sizes = core.sample_batch(np.ascontiguousarray(V), lam, u1, u2)
    assert sites.shape == (1000, 4) and sizes.shape == (1000,)
    assert np.all(sizes >= 1) and np.all(sizes <= 4)


@both
def test_sampler_outputs_identical():
    py, cy = _backend.IMPLEMENTATIONS["python"], _backend.IMPLEMENTATIONS["cython"]
    for seed, (n, r) in enumerate(itertools.product((3, 8, 12), (1, 3))):
        rng = np.random.default_rng(seed)
        V, _ = np.linalg.qr(rng.standard_normal((n, r)))
        V = np.ascontiguousarray(V)
        lam = rng.uniform(0.1, 1.0, r)
        u1, u2 = rng.random((5000, r)), rng.random((5000, r))
        a = py.sample_batch(V, lam, u1, u2)
        b = cy.sample_batch(V, lam, u1, u2)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


@both
def test_jacobi_outputs_agree():
    py, cy = _backend.IMPLEMENTATIONS["python"], _backend.IMPLEMENTATIONS["cython"]
    A = random_contraction(np.random.default_rng(3), 20, lo=0.0, hi=1.0)
    wa, Va, *_ = py.jacobi_eigh(A.copy(), 1e-15, 100)
    wb, Vb, *_ = cy.jacobi_eigh(A.copy(), 1e-15, 100)
    assert np.allclose(np.sort(wa), np.sort(wb), atol=1e-13)


@both
def test_subset_determinants_agree():
    py, cy = _backend.IMPLEMENTATIONS["python"], _backend.IMPLEMENTATIONS["cython"]
    L = random_contraction(np.random.default_rng(4), 10, lo=0.1, hi=2.0)
    assert np.allclose(py.subset_determinants(L), cy.subset_determinants(L), rtol=1e-11, atol=1e-14)


def test_pure_python_selected_by_environment():
    env = dict(os.environ, DPPTRANSFER_PURE="1")
    out = subprocess.run([sys.executable, "-c", "import dpptransfer; print(dpptransfer.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
