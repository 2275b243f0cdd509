import numpy as np
import pytest

from lowrankcv import matrix_core as mc
from lowrankcv.errors import InvalidMatrix, RankOutOfRange, ShapeError
from lowrankcv.randmat import RngSeed, sample_rotation


def test_svd_identity():
    f = mc.svd(np.eye(3))
    assert np.allclose(f.d, [1.0, 1.0, 1.0])


def test_svd_diagonal():
    f = mc.svd(np.diag([3.0, 1.0]))
    assert np.allclose(f.d, [3.0, 1.0])
    # sign convention makes both factors the identity here
    assert np.allclose(f.u, np.eye(2))
    assert np.allclose(f.v, np.eye(2))


def test_svd_reconstruction_random():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1.0, 1.0, size=(6, 4))
    f = mc.svd(x)
    assert np.linalg.norm(x - f.u @ np.diag(f.d) @ f.v.T) <= 1e-10


def test_svd_invariants():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(8, 5))
    f = mc.svd(x)
    assert np.abs(f.u.T @ f.u - np.eye(5)).max() <= 1e-10
    assert np.abs(f.v.T @ f.v - np.eye(5)).max() <= 1e-10
    assert (np.diff(f.d) <= 1e-12).all()
    # each v column has its largest-magnitude entry positive
    lead = np.argmax(np.abs(f.v), axis=0)
    assert (f.v[lead, np.arange(5)] > 0).all()


def test_svd_deterministic():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(7, 6))
    f1, f2 = mc.svd(x), mc.svd(x)
    assert np.array_equal(f1.u, f2.u)
    assert np.array_equal(f1.d, f2.d)
    assert np.array_equal(f1.v, f2.v)


def test_svd_orthogonal_equivariance():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(9, 6))
    q = sample_rotation(9, RngSeed(10))
    p = sample_rotation(6, RngSeed(11))
    d1 = mc.svd(x).d
    d2 = mc.svd(q @ x @ p).d
    assert np.abs(d1 - d2).max() <= 1e-8


def test_svd_rejects_bad_input():
    with pytest.raises(InvalidMatrix):
        mc.svd(np.array([[1.0, np.nan]]))
    with pytest.raises(InvalidMatrix):
        mc.svd(np.zeros((0, 3)))


def test_truncate_zero_and_full():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(5, 7))
    f = mc.svd(x)
    assert np.array_equal(mc.truncate(f, 0), np.zeros((5, 7)))
    full = mc.truncate(f, 5)
    assert np.linalg.norm(x - full) <= 1e-8 * np.linalg.norm(x)
    with pytest.raises(RankOutOfRange):
        mc.truncate(f, 6)


def test_truncate_eckart_young():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(8, 6))
    f = mc.svd(x)
    for k in range(7):
        resid = np.linalg.norm(x - mc.truncate(f, k)) ** 2
        assert resid == pytest.approx(float((f.d[k:] ** 2).sum()), abs=1e-8)


def test_truncate_scale():
    x = np.diag([2.0, 1.0])
    f = mc.svd(x)
    assert np.allclose(mc.truncate(f, 2, scale=3.0), 3.0 * x)


def test_masked_frob_sq():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert mc.masked_frob_sq(a, np.zeros((2, 2)), np.ones((2, 2), bool)) == 30.0
    assert mc.masked_frob_sq(a, a, np.zeros((2, 2), bool)) == 0.0
    idx = [(0, 1), (1, 0)]
    assert mc.masked_frob_sq(a, np.zeros((2, 2)), idx) == 13.0
    with pytest.raises(ShapeError):
        mc.masked_frob_sq(a, np.zeros((3, 2)), idx)


def test_index_set_canonicalizes():
    idx = mc.index_set([(1, 0), (0, 1), (1, 0)], (2, 2))
    assert idx.tolist() == [[0, 1], [1, 0]]
    with pytest.raises(ShapeError):
        mc.index_set([(2, 0)], (2, 2))
    mask = mc.mask_from_indices(idx, (2, 2))
    assert np.array_equal(mc.indices_from_mask(mask), idx)


def test_pinv_truncated():
    f = mc.svd(np.diag([2.0, 1.0]))
    # second value treated as zero via a large cutoff
    out = mc.pinv_truncated(f, 2, eps=1.5)
    assert np.allclose(out, np.diag([0.5, 0.0]))
    f_eye = mc.svd(np.eye(4))
    assert np.allclose(mc.pinv_truncated(f_eye, 4), np.eye(4))


def test_pinv_moore_penrose_identity():
    rng = np.random.default_rng(6)
    a = rng.normal(size=(4, 4))
    pinv = mc.pinv_truncated(mc.svd(a), 4)
    assert np.abs(a @ pinv @ a - a).max() <= 1e-8


def test_pinv_zero_singular_value_maps_to_zero():
    a = np.diag([2.0, 0.0])
    out = mc.pinv_truncated(mc.svd(a), 2, eps=1e-12)
    assert np.allclose(out, np.diag([0.5, 0.0]))


def test_matrix_io_roundtrip_text(tmp_path):
    path = tmp_path / "m.txt"
    a = np.array([[1.0, 2.5], [3.0, -4.0], [0.0, 9.25]])
    observed = np.array([[True, False], [True, True], [False, True]])
    mc.write_matrix(path, a, observed)
    values, mask = mc.read_matrix(path)
    assert np.array_equal(mask, observed)
    assert np.array_equal(values[mask], a[mask])
    assert (values[~mask] == 0.0).all()


def test_matrix_io_roundtrip_csv(tmp_path):
    path = tmp_path / "m.csv"
    a = np.array([[1.0, 2.0], [2.0, 4.0]])
    mc.write_matrix(path, a)
    values, mask = mc.read_matrix(path)
    assert mask.all()
    assert np.array_equal(values, a)


def test_read_matrix_rejects_malformed(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("2 2\n1 2\n3\n")
    with pytest.raises(InvalidMatrix):
        mc.read_matrix(bad)
