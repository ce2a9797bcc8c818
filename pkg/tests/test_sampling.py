import json

import numpy as np
import pytest

from conftest import random_contraction, random_projection
from dpptransfer.errors import DomainError, ToleranceError, ValidationError
from dpptransfer.ground import Cell, GroundSpace
from dpptransfer.kernel import constant_rank1, diag, fourier_projection
from dpptransfer.sampling import (PointConfiguration, RngStream, Sampler, block_counts, configurations,
                                  discretize_for_sampling, sample, sample_counts, samples_from_csv,
                                  samples_to_csv, samples_to_json)

HALF = np.array([[0.5, 0.5], [0.5, 0.5]])


# ---------------------------------------------------------------- examples

def test_deterministic_projection():
    for stream in range(20):
        assert sample(np.diag([1.0, 1.0, 0.0]), RngStream(3, stream)).sites == (0, 1)


def test_bernoulli_marginal():
    sites, sizes = Sampler(np.array([[0.3]])).draw(RngStream(1), 100_000)
    assert abs(sizes.mean() - 0.3) < 0.006


def test_rank_one_projection_split():
    sites, sizes = Sampler(HALF).draw(RngStream(2), 100_000)
    assert np.all(sizes == 1)
    assert abs((sites[:, 0] == 0).mean() - 0.5) < 0.007


def test_sample_counts_examples():
    law = sample_counts(np.diag([1.0, 0.0]), [[0], [1]], RngStream(4), 1000)
    assert law.prob((1, 0)) == 1.0
    law = sample_counts(np.diag([0.5, 0.5]), [[0], [1]], RngStream(5), 100_000)
    assert law.n_samples == 100_000
    assert max(abs(law.prob(k) - 0.25) for k in [(0, 0), (0, 1), (1, 0), (1, 1)]) < 0.01
    law = sample_counts(HALF, [[0], [1]], RngStream(6), 100_000)
    assert law.prob((0, 0)) == 0.0 and law.prob((1, 1)) == 0.0
    assert abs(law.prob((1, 0)) - 0.5) < 0.007


def test_overlapping_blocks_rejected():
    with pytest.raises(DomainError):
        sample_counts(HALF, [[0, 1], [1]], RngStream(0), 10)


def test_spectrum_violation_rejected():
    with pytest.raises(ValidationError):
        Sampler(np.diag([1.2, 0.5]))
    with pytest.raises(ValidationError):
        Sampler(np.array([[0.5, 0.1], [0.3, 0.5]]))


# ---------------------------------------------------------------- invariants

def test_simplicity_and_cardinality(core):
    rng = np.random.default_rng(8)
    M = random_contraction(rng, 10, lo=0.0, hi=1.0)
    s = Sampler(M)
    g = RngStream(9).generator()
    u1, u2 = g.random((20_000, s.rank)), g.random((20_000, s.rank))
    sites, sizes = core.sample_batch(s.eigenvectors, s.eigenvalues, u1, u2)
    assert np.all(sizes <= s.rank)
    for row, k in zip(sites, sizes):
        assert len(set(row[:k])) == k
        assert np.all(row[k:] == -1)
        assert np.all(np.diff(row[:k]) > 0)


@pytest.mark.parametrize("rank", [1, 3, 6])
def test_projection_count_equals_rank(rank):
    M = random_projection(np.random.default_rng(rank), 9, rank)
    _, sizes = Sampler(M).draw(RngStream(rank), 50_000)
    assert np.all(sizes == rank)


def test_one_point_marginals():
    M = random_contraction(np.random.default_rng(10), 8, lo=0.0, hi=1.0)
    n = 100_000
    sites, sizes = Sampler(M).draw(RngStream(10), n)
    occ = block_counts(sites, sizes, [[s] for s in range(8)], 8)
    p = np.diag(M)
    se = np.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(occ.mean(axis=0) - p) <= 4 * se)


def test_pair_covariance_is_negative_square():
    M = random_contraction(np.random.default_rng(11), 6, lo=0.0, hi=1.0)
    n = 100_000
    sites, sizes = Sampler(M).draw(RngStream(11), n)
    occ = block_counts(sites, sizes, [[s] for s in range(6)], 6).astype(float)
    for a, b in [(0, 1), (2, 5), (3, 4)]:
        prod = (occ[:, a] - occ[:, a].mean()) * (occ[:, b] - occ[:, b].mean())
        se = prod.std(ddof=1) / np.sqrt(n)
        assert abs(prod.mean() + M[a, b] ** 2) <= 4 * se


# ---------------------------------------------------------------- reproducibility

def test_same_stream_same_draws():
    M = random_contraction(np.random.default_rng(12), 7)
    a = Sampler(M).draw(RngStream(5, 2), 1000)
    b = Sampler(M).draw(RngStream(5, 2), 1000)
    c = Sampler(M).draw(RngStream(5, 3), 1000)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    assert not np.array_equal(a[0], c[0])


def test_streams_independent_of_thread_count():
    M = random_contraction(np.random.default_rng(13), 7)
    s = Sampler(M)
    one = s.draw_streams(21, 40_001, streams=4, threads=1)
    many = s.draw_streams(21, 40_001, streams=4, threads=4)
    assert np.array_equal(one[0], many[0]) and np.array_equal(one[1], many[1])
    assert len(one[1]) == 40_001


def test_rng_stream_type_is_checked():
    with pytest.raises(ValidationError):
        Sampler(HALF).draw("seed", 3)


# ---------------------------------------------------------------- continuous kernels

def test_discretize_constant_kernel():
    Q = discretize_for_sampling(constant_rank1(), 2)
    assert np.allclose(Q.Q, HALF, atol=1e-15)
    Q = discretize_for_sampling(constant_rank1(), 7)
    assert np.allclose(Q.Q, np.full((7, 7), 1 / 7), atol=1e-15)


def test_discretize_fourier_leakage_matches_closed_form():
    # piecewise-constant capture of cos/sin(2 pi x) on m cells loses 1 - sinc^2(pi / m) of each
    K = fourier_projection(3)
    for m in (64, 128):
        closed = 2 * (1 - np.sinc(1 / m) ** 2)
        Q = discretize_for_sampling(K, m, tol=1e-2)
        assert Q.leakage == pytest.approx(closed, rel=1e-9)
    assert discretize_for_sampling(K, 128).leakage < 1e-3


def test_discretize_refuses_coarse_grid():
    with pytest.raises(ToleranceError) as err:
        discretize_for_sampling(fourier_projection(3), 64, tol=1e-3)
    assert err.value.kind == "leakage"
    assert "finer grid" in str(err.value)


def test_discretize_rejects_discrete_kernel():
    with pytest.raises(DomainError):
        discretize_for_sampling(diag(0.5), 4)


# ---------------------------------------------------------------- configurations and export

def test_point_configuration_counts():
    c = PointConfiguration((0, 2, 5), 6)
    assert c.count([0, 1, 2]) + c.count([3, 4, 5]) == len(c)
    assert c.count(Cell.sites([5])) == 1
    with pytest.raises(ValidationError):
        PointConfiguration((1, 1), 3)
    cont = PointConfiguration((0, 3), 4, points=(0.1, 0.8))
    assert cont.count(Cell.interval((0.0, 0.5))) == 1


def test_csv_and_json_round_trip():
    sites, sizes = Sampler(random_contraction(np.random.default_rng(14), 5)).draw(RngStream(1), 200)
    text = samples_to_csv(sites, sizes)
    assert len(text.splitlines()) == 200
    assert samples_from_csv(text) == configurations(sites, sizes)
    assert json.loads(samples_to_json(sites, sizes))["configurations"] == [list(c) for c in configurations(sites, sizes)]


def test_csv_of_deterministic_projection():
    sites, sizes = Sampler(np.diag([1.0, 1.0, 0.0])).draw(RngStream(0), 3)
    assert samples_to_csv(sites, sizes) == "0,1\n0,1\n0,1\n"
