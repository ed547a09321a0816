import itertools

import numpy as np
import pytest

from grrmf.errors import ValidationError
from grrmf.generators import identity, upper_triangle
from grrmf.linalg import approx_rank_curve, best_rank_k, best_rank_k_error, epsilon_rank, svd, write_curve_csv


def test_singular_values_match_gram_eigenvalues():
    rng = np.random.default_rng(0)
    for shape in [(6, 4), (4, 6), (7, 7), (1, 5)]:
        a = rng.normal(size=shape)
        eig = np.sort(np.linalg.eigvalsh(a.T @ a if shape[0] >= shape[1] else a @ a.T))[::-1]
        sig = svd(a).singular_values
        assert np.allclose(sig**2, np.clip(eig, 0, None), atol=1e-10)
        assert np.all(np.diff(sig) <= 1e-14)


def test_factors_are_orthonormal_and_reconstruct():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n, m = rng.integers(1, 9, size=2)
        k = rng.integers(1, min(n, m) + 1)
        a = rng.normal(size=(n, k)) @ rng.normal(size=(k, m))
        res = svd(a)
        assert np.allclose(res.reconstruct(), a, atol=1e-10)
        r = res.singular_values.size
        assert np.allclose(res.left_vectors.T @ res.left_vectors, np.eye(r), atol=1e-10)
        assert np.allclose(res.right_vectors.T @ res.right_vectors, np.eye(r), atol=1e-10)
        assert np.sum(res.singular_values > 1e-8 * max(1.0, res.singular_values[0])) == k


def test_rank_one_and_transpose():
    x = np.outer([1.0, 2.0, 3.0], [4.0, 5.0])
    sig = svd(x).singular_values
    assert sig[0] == pytest.approx(np.linalg.norm(x))
    assert sig[1] == pytest.approx(0.0, abs=1e-12)
    rng = np.random.default_rng(2)
    a = rng.normal(size=(5, 3))
    assert np.allclose(svd(a).singular_values, svd(a.T).singular_values)


def test_truncation_error_is_tail_energy():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(8, 6))
    sig = np.linalg.svd(a, compute_uv=False)
    for k in range(7):
        assert best_rank_k_error(a, k) == pytest.approx(np.sum(sig[k:] ** 2), rel=1e-10, abs=1e-12)
        assert np.sum((a - best_rank_k(a, k)) ** 2) == pytest.approx(best_rank_k_error(a, k), rel=1e-9, abs=1e-10)


def test_identity_curve_is_n_minus_k():
    curve = approx_rank_curve(identity(10))
    assert [k for k, _ in curve] == list(range(11))
    for k, res in curve:
        assert res == pytest.approx(10 - k, abs=1e-6)
    big = approx_rank_curve(identity(20))
    assert all(abs(res - (20 - k)) < 1e-6 for k, res in big)


def test_curve_is_nonincreasing_and_hits_zero():
    curve = approx_rank_curve(upper_triangle(12))
    vals = [r for _, r in curve]
    assert all(b <= a + 1e-12 for a, b in itertools.pairwise(vals))
    assert vals[-1] == pytest.approx(0.0, abs=1e-9)


def test_epsilon_rank():
    assert epsilon_rank(identity(10), 3.5) == 7
    assert epsilon_rank(identity(10), 0.0) == 10


def test_bad_k_is_rejected():
    with pytest.raises(ValidationError):
        best_rank_k_error(np.eye(3), 4)
    with pytest.raises(ValidationError):
        approx_rank_curve(identity(3), 5)


def test_curve_csv(tmp_path):
    write_curve_csv(approx_rank_curve(identity(3)), tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "k,residual" and len(lines) == 5
