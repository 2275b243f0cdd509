import numpy as np
import pytest

from lowrankcv import matrix_core as mc
from lowrankcv.errors import NoData, RankOutOfRange, ShapeError
from lowrankcv.missing import (
    MaskedMatrix,
    _column_mean_fill,
    em_svd,
    load_masked,
    svd_with_missing,
)
from lowrankcv.randmat import RngSeed


def masked(values, observed):
    return MaskedMatrix(values=np.asarray(values, float),
                        observed=np.asarray(observed, bool))


def random_masked(rng, n, p, frac_missing=0.2):
    x = rng.normal(size=(n, p))
    mask = rng.random((n, p)) > frac_missing
    if not mask.any():
        mask[0, 0] = True
    return masked(np.where(mask, x, 0.0), mask)


def test_fully_observed_single_step():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(6, 5))
    a = masked(x, np.ones((6, 5), bool))
    res = em_svd(a, 2)
    assert res.iterations == 1 and res.converged
    assert np.allclose(res.completion, mc.truncate(mc.svd(x), 2))
    assert np.array_equal(res.filled, x)


def test_exact_rank_one_completion():
    a = masked([[1.0, 2.0], [2.0, 0.0]], [[True, True], [True, False]])
    res = em_svd(a, 1, tol=1e-12, max_iter=5000)
    assert res.converged
    assert res.filled[1, 1] == pytest.approx(4.0, abs=1e-4)
    assert res.rss_trace[-1] <= 1e-8


def test_all_missing_column_initializes_to_zero():
    a = masked([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]],
               [[True, False], [True, False], [True, False]])
    work = _column_mean_fill(a)
    assert (work[:, 1] == 0.0).all()
    assert np.array_equal(work[:, 0], [1.0, 2.0, 3.0])


def test_monotone_rss():
    rng = np.random.default_rng(1)
    for i in range(30):
        a = random_masked(rng, 10 + i % 5, 8, frac_missing=0.3)
        res = em_svd(a, 1 + i % 3, tol=1e-9, max_iter=200)
        trace = np.asarray(res.rss_trace)
        slack = 1e-9 * max(trace[0], 1.0)
        assert (np.diff(trace) <= slack).all()


def test_fixed_point_idempotence():
    rng = np.random.default_rng(2)
    a = random_masked(rng, 15, 10)
    tol = 1e-7
    first = em_svd(a, 2, tol=tol, max_iter=1000)
    assert first.converged
    second = em_svd(a, 2, tol=tol, max_iter=1000, init=first.filled)
    denom = max(first.rss_trace[0], 1e-12)
    assert abs(second.rss_trace[-1] - first.rss_trace[-1]) / denom <= tol


def test_mask_respect_bitwise():
    rng = np.random.default_rng(3)
    a = random_masked(rng, 12, 9)
    res = em_svd(a, 3)
    assert np.array_equal(res.filled[a.observed], a.values[a.observed])


def test_completion_rank_bound():
    rng = np.random.default_rng(4)
    a = random_masked(rng, 12, 9)
    res = em_svd(a, 2, tol=1e-8)
    d = np.linalg.svd(res.completion, compute_uv=False)
    assert d[2] <= 1e-8 * d[0]


def test_max_iter_returns_unconverged():
    rng = np.random.default_rng(5)
    a = random_masked(rng, 12, 9, frac_missing=0.4)
    res = em_svd(a, 2, tol=1e-14, max_iter=3)
    assert not res.converged
    assert res.iterations == 3
    assert len(res.rss_trace) == 3


def test_validation_errors():
    with pytest.raises(NoData):
        masked([[1.0]], [[False]])
    a = masked([[1.0, 2.0]], [[True, False]])
    with pytest.raises(RankOutOfRange):
        em_svd(a, 2)
    with pytest.raises(ShapeError):
        MaskedMatrix(values=np.ones((2, 2)), observed=np.ones((2, 3), bool))


def test_multi_start_not_worse():
    rng = np.random.default_rng(6)
    a = random_masked(rng, 14, 10, frac_missing=0.35)
    single = em_svd(a, 2, tol=1e-8)
    multi = em_svd(a, 2, tol=1e-8,
                   starts=[RngSeed(0), RngSeed(1), RngSeed(2)])
    assert multi.rss_trace[-1] <= single.rss_trace[-1] + 1e-6


def test_svd_with_missing_fully_observed():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(8, 6))
    a = masked(x, np.ones((8, 6), bool))
    u, d, v = svd_with_missing(a, 2)
    f = mc.svd(x)
    assert np.allclose(u, f.u[:, :2])
    assert np.allclose(d, f.d[:2])
    assert np.allclose(v, f.v[:, :2])


def test_svd_with_missing_rank_zero():
    a = masked([[1.0, 2.0], [2.0, 0.0]], [[True, True], [True, False]])
    u, d, v = svd_with_missing(a, 0)
    assert u.shape == (2, 0) and d.shape == (0,) and v.shape == (2, 0)
    res = em_svd(a, 0)
    assert res.rss_trace[-1] == pytest.approx(1.0 + 4.0 + 4.0, abs=1e-12)


def test_svd_with_missing_planted_low_rank():
    rng = np.random.default_rng(8)
    u0 = rng.normal(size=(20, 2))
    v0 = rng.normal(size=(10, 2))
    x = u0 @ v0.T
    mask = rng.random((20, 10)) > 0.1
    a = masked(np.where(mask, x, 0.0), mask)
    res = em_svd(a, 2, tol=1e-12, max_iter=2000)
    assert res.rss_trace[-1] <= 1e-6
    u, d, v = svd_with_missing(a, 2, tol=1e-12, max_iter=2000)
    recon = (u * d) @ v.T
    assert np.abs(recon - res.completion).max() <= 1e-8
    assert np.abs(u.T @ u - np.eye(2)).max() <= 1e-10


def test_load_masked_roundtrip(tmp_path):
    path = tmp_path / "x.txt"
    values = np.array([[1.0, 2.0], [2.0, 4.0]])
    observed = np.array([[True, True], [True, False]])
    mc.write_matrix(path, values, observed)
    a = load_masked(path)
    assert np.array_equal(a.observed, observed)
    assert a.values[1, 1] == 0.0
    assert np.array_equal(a.values[observed], values[observed])
