import math

import numpy as np
import pytest

from lowrankcv.errors import DomainError
from lowrankcv.randmat import (
    RngSeed,
    frame_projection_defect,
    gen_factors,
    gen_noise,
    sample_model,
    sample_rotation,
    sample_stiefel,
)


def test_seed_determinism():
    a = sample_stiefel(12, 3, RngSeed(5, 1))
    b = sample_stiefel(12, 3, RngSeed(5, 1))
    assert np.array_equal(a, b)
    c = sample_stiefel(12, 3, RngSeed(5, 2))
    assert not np.array_equal(a, c)


def test_child_streams_distinct_and_stable():
    seed = RngSeed(123)
    assert seed.child(0) == seed.child(0)
    assert seed.child(0) != seed.child(1)
    assert seed.child("noise") == seed.child("noise")
    assert seed.child("noise") != seed.child("u")


def test_stiefel_orthonormal():
    v = sample_stiefel(30, 7, RngSeed(1))
    assert np.abs(v.T @ v - np.eye(7)).max() <= 1e-10
    with pytest.raises(DomainError):
        sample_stiefel(3, 4, RngSeed(1))


def test_stiefel_scalar_sign_frequencies():
    seed = RngSeed(2)
    draws = np.array([sample_stiefel(1, 1, seed.child(i))[0, 0] for i in range(10_000)])
    assert set(np.round(np.abs(draws), 12)) == {1.0}
    # 3 sigma band for a fair coin over 10^4 draws
    assert abs((draws > 0).mean() - 0.5) <= 3.0 * 0.5 / 100.0


def test_stiefel_second_moment():
    p, draws = 10, 20_000
    seed = RngSeed(3)
    vals = np.array([sample_stiefel(p, 1, seed.child(i))[0, 0] ** 2
                     for i in range(draws)])
    se = vals.std(ddof=1) / math.sqrt(draws)
    assert abs(vals.mean() - 1.0 / p) <= 3.0 * se


def test_rotation_orthogonal():
    q = sample_rotation(20, RngSeed(4))
    assert np.abs(q.T @ q - np.eye(20)).max() <= 1e-10
    assert abs(abs(np.linalg.det(q)) - 1.0) <= 1e-10
    r1 = sample_rotation(1, RngSeed(5))
    assert r1.shape == (1, 1) and abs(abs(r1[0, 0]) - 1.0) <= 1e-14


def test_rotation_preserves_singular_values():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(20, 10))
    q = sample_rotation(20, RngSeed(7))
    d1 = np.linalg.svd(x, compute_uv=False)
    d2 = np.linalg.svd(q @ x, compute_uv=False)
    assert np.abs(d1 - d2).max() <= 1e-9


def test_gen_factors_sparse_degenerate():
    u, v = gen_factors(50, 40, 2, RngSeed(8), kind="sparse", sparsity=1.0)
    assert np.allclose(np.abs(u), 1.0 / math.sqrt(50))
    assert np.allclose((u ** 2).sum(axis=0), 1.0)
    assert np.allclose((v ** 2).sum(axis=0), 1.0)


def test_gen_factors_gaussian_column_scale():
    n, draws = 100, 1000
    seed = RngSeed(9)
    norms = np.array([
        (gen_factors(n, 20, 1, seed.child(i), kind="gaussian")[0] ** 2).sum()
        for i in range(draws)])
    se = norms.std(ddof=1) / math.sqrt(draws)
    assert abs(norms.mean() - 1.0) <= 3.0 * se


def test_gen_factors_sparse_nonzero_count():
    n, draws, s = 100, 400, 0.1
    seed = RngSeed(10)
    counts = np.array([
        (gen_factors(n, 20, 1, seed.child(i), kind="sparse", sparsity=s)[0] != 0).sum()
        for i in range(draws)])
    se = counts.std(ddof=1) / math.sqrt(draws)
    assert abs(counts.mean() - n * s) <= 3.0 * se


def test_gen_noise_white_variance():
    e = gen_noise(1000, 1000, 2.0, RngSeed(11), kind="white")
    assert abs((e ** 2).mean() - 2.0) <= 0.01 * 2.0


def test_gen_noise_heavy_variance():
    e = gen_noise(1000, 1000, 1.0, RngSeed(12), kind="heavy", nu=3.0)
    assert abs((e ** 2).mean() - 1.0) <= 0.05


def test_gen_noise_colored_variance():
    e = gen_noise(1000, 1000, 1.0, RngSeed(13), kind="colored", nu=3.0, nu2=3.0)
    assert abs((e ** 2).mean() - 1.0) <= 0.10


def test_gen_noise_domain():
    with pytest.raises(DomainError):
        gen_noise(10, 10, 1.0, RngSeed(14), kind="heavy", nu=2.0)
    with pytest.raises(DomainError):
        gen_noise(10, 10, 1.0, RngSeed(14), kind="colored", nu=1.5)
    with pytest.raises(DomainError):
        gen_noise(10, 10, -1.0, RngSeed(14))


def test_sample_model_zero_strengths():
    s = sample_model(8, 6, [], RngSeed(15))
    assert np.array_equal(s.x, s.e)
    s2 = sample_model(8, 6, [0.0, 0.0], RngSeed(15))
    assert np.array_equal(s2.x, s2.e)


def test_sample_model_noiseless_rank():
    s = sample_model(30, 20, [3.0, 2.0], RngSeed(16), factor_kind="stiefel",
                     sigma2=0.0)
    d = np.linalg.svd(s.x, compute_uv=False)
    assert d[2] <= 1e-8 * d[0]
    assert np.array_equal(s.x, s.signal + s.e) and (s.e == 0).all()


def test_sample_model_exact_decomposition():
    s = sample_model(40, 25, [5.0, 2.0, 1.0], RngSeed(17), factor_kind="stiefel")
    recon = math.sqrt(40) * ((s.u * s.d) @ s.v.T) + s.e
    assert np.array_equal(s.x, recon)
    assert np.abs(s.u.T @ s.u - np.eye(3)).max() <= 1e-8


def test_sample_model_weak_design_echo():
    strengths = (10.0, 9.0, 8.0, 7.0, 6.0, 5.0)
    s = sample_model(100, 50, strengths, RngSeed(18), factor_kind="gaussian")
    assert s.shape == (100, 50)
    assert s.config["strengths"] == strengths
    assert s.config["factor_kind"] == "gaussian"


def test_sample_model_orthonormalize_flag():
    s = sample_model(60, 40, [4.0, 2.0], RngSeed(19), factor_kind="sparse",
                     orthonormalize=True)
    assert np.abs(s.u.T @ s.u - np.eye(2)).max() <= 1e-10
    assert np.abs(s.v.T @ s.v - np.eye(2)).max() <= 1e-10


def test_sample_model_strength_validation():
    with pytest.raises(DomainError):
        sample_model(10, 10, [1.0, 2.0], RngSeed(20))


def test_frame_projection_defect_full():
    u = sample_stiefel(20, 3, RngSeed(21))
    assert frame_projection_defect(u, 20, RngSeed(22)) <= 1e-18


def test_frame_projection_defect_bound():
    # mean defect obeys (1/2) k (k+1) (1 - q/p); see the projected-frame
    # second-moment identity E||sqrt(q)(UtU - I)||^2 = 2(p-q)/(p+2) at k=1
    p, q, k = 50, 25, 1
    u = sample_stiefel(p, k, RngSeed(23))
    seed = RngSeed(24)
    vals = np.array([frame_projection_defect(u, q, seed.child(i))
                     for i in range(1000)])
    bound = 0.5 * k * (k + 1) * (1 - q / p)
    assert vals.mean() <= bound
    # and tracks a quarter of the dot-product fluctuation at this geometry
    assert vals.mean() == pytest.approx(0.5 * (p - q) / (p + 2), rel=0.15)


def test_frame_projection_global_bound():
    k, p = 3, 40
    u = sample_stiefel(p, k, RngSeed(25))
    seed = RngSeed(26)
    rng = np.random.default_rng(27)
    global_bound = 0.5 * k * (k + 1)
    for q in rng.integers(p // 4, p + 1, size=5):
        vals = np.array([frame_projection_defect(u, int(q), seed.child(f"{q}-{i}"))
                         for i in range(200)])
        assert vals.mean() <= global_bound


def test_grassmann_projection_moments():
    # E[P] = (k/p) I, and off-diagonal entries uncorrelated with diagonal ones
    p, k, draws = 8, 3, 4000
    seed = RngSeed(28)
    diag_sum = np.zeros((p, p))
    p01 = np.empty(draws)
    p00 = np.empty(draws)
    for i in range(draws):
        v = sample_stiefel(p, k, seed.child(i))
        proj = v @ v.T
        diag_sum += proj
        p01[i] = proj[0, 1]
        p00[i] = proj[0, 0]
    mean_proj = diag_sum / draws
    target = (k / p) * np.eye(p)
    # elementwise 3 sigma bands
    sd_diag = math.sqrt(2.0 / (p + 2) * (k / p) * (1 - k / p))
    sd_off = math.sqrt(p / ((p - 1) * (p + 2)) * (k / p) * (1 - k / p))
    tol = 3.0 * max(sd_diag, sd_off) / math.sqrt(draws)
    assert np.abs(mean_proj - target).max() <= 3.0 * tol  # union slack over entries
    corr = np.corrcoef(p00, p01)[0, 1]
    assert abs(corr) <= 3.0 / math.sqrt(draws)


def test_probabilistic_frobenius_norm():
    rng = np.random.default_rng(29)
    a = rng.normal(size=(5, 4))
    draws = 100_000
    x = rng.normal(size=(draws, 5))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    y = rng.normal(size=(draws, 4))
    y /= np.linalg.norm(y, axis=1, keepdims=True)
    vals = np.einsum("ri,ij,rj->r", x, a, y) ** 2
    se = vals.std(ddof=1) / math.sqrt(draws)
    target = (a ** 2).sum() / (5 * 4)
    assert abs(vals.mean() - target) <= 3.0 * se


def test_frob_random_product_identity():
    # E ||Z A||_F^2 = m E||A||_F^2 for Z with iid unit-variance entries
    rng = np.random.default_rng(30)
    a = rng.normal(size=(5, 3))
    m, draws = 6, 20_000
    z = rng.normal(size=(draws, m, 5))
    vals = ((z @ a) ** 2).sum(axis=(1, 2))
    se = vals.std(ddof=1) / math.sqrt(draws)
    assert abs(vals.mean() - m * (a ** 2).sum()) <= 3.0 * se
