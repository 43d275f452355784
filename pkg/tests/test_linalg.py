import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from warmfold.errors import DimensionError, NumericalWarning
from warmfold.linalg import matvec, pseudo_inverse, truncated_svd


def jacobi_singular_values(a, sweeps=60):
    """One-sided Jacobi SVD; returns singular values in descending order."""
    a = np.array(a, dtype=np.float64)
    if a.shape[0] < a.shape[1]:
        a = a.T
    n = a.shape[1]
    for _ in range(sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = a[:, p] @ a[:, p]
                beta = a[:, q] @ a[:, q]
                gamma = a[:, p] @ a[:, q]
                if abs(gamma) <= 1e-15 * np.sqrt(alpha * beta) or gamma == 0.0:
                    continue
                off = max(off, abs(gamma) / np.sqrt(alpha * beta))
                zeta = (beta - alpha) / (2 * gamma)
                t = np.sign(zeta) / (abs(zeta) + np.sqrt(1 + zeta * zeta)) if zeta != 0 else 1.0
                c = 1 / np.sqrt(1 + t * t)
                s = c * t
                ap = a[:, p].copy()
                a[:, p] = c * ap - s * a[:, q]
                a[:, q] = s * ap + c * a[:, q]
        if off < 1e-15:
            break
    return np.sort(np.linalg.norm(a, axis=0))[::-1]


def optimal_error(sv, d):
    return np.sqrt(np.sum(sv[d:] ** 2))


def test_jacobi_oracle_sanity():
    a = np.diag([3.0, 1.0, 2.0])
    np.testing.assert_allclose(jacobi_singular_values(a), [3, 2, 1], atol=1e-14)


def test_svd_identity():
    r = truncated_svd(sp.identity(2, format="csr"), 2)
    np.testing.assert_allclose(r.singular_values, [1, 1], atol=1e-12)
    np.testing.assert_allclose(r.left.T @ r.left, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(r.right.T @ r.right, np.eye(2), atol=1e-12)


def test_svd_rank_one_is_truncated_and_flagged():
    ones = sp.csr_matrix(np.ones((3, 4)))
    with pytest.warns(NumericalWarning):
        r = truncated_svd(ones, 2)
    assert r.rank_deficient and r.rank == 1
    assert r.singular_values[0] == pytest.approx(np.sqrt(12), rel=1e-12)


def test_svd_rank_bounds():
    with pytest.raises(DimensionError):
        truncated_svd(sp.identity(3, format="csr"), 4)


def test_svd_random_sparse_matches_jacobi_oracle():
    a = sp.random(200, 100, density=0.1, random_state=7, format="csr")
    a.data[:] = 1.0
    r = truncated_svd(a, 10, seed=3)
    sv = jacobi_singular_values(a.toarray())
    err = np.linalg.norm(a.toarray() - r.reconstruct())
    assert abs(err - optimal_error(sv, 10)) / optimal_error(sv, 10) < 1e-6
    np.testing.assert_allclose(r.singular_values, sv[:10], rtol=1e-8)


@pytest.mark.parametrize("d", [1, 5, 10])
@pytest.mark.parametrize("seed", range(3))
def test_svd_optimality_small(d, seed):
    rng = np.random.default_rng(seed)
    dense = rng.standard_normal((30, 20))
    r = truncated_svd(sp.csr_matrix(dense), d, seed=seed)
    sv = jacobi_singular_values(dense)
    err = np.linalg.norm(dense - r.reconstruct())
    assert abs(err - optimal_error(sv, d)) / optimal_error(sv, d) < 1e-6
    assert np.abs(r.left.T @ r.left - np.eye(d)).max() < 1e-8
    assert np.abs(r.right.T @ r.right - np.eye(d)).max() < 1e-8
    assert (np.diff(r.singular_values) <= 0).all() and (r.singular_values >= 0).all()


def test_svd_deterministic():
    a = sp.random(120, 80, density=0.05, random_state=1, format="csr")
    r1 = truncated_svd(a, 6, seed=11)
    r2 = truncated_svd(a, 6, seed=11)
    assert r1.left.tobytes() == r2.left.tobytes()
    assert r1.right.tobytes() == r2.right.tobytes()
    assert r1.singular_values.tobytes() == r2.singular_values.tobytes()


def moore_penrose_residuals(v, p):
    def rel(x, y):
        return np.linalg.norm(x - y) / max(np.linalg.norm(y), 1e-300)
    return (rel(v @ p @ v, v), rel(p @ v @ p, p),
            np.linalg.norm((v @ p).T - v @ p), np.linalg.norm((p @ v).T - p @ v))


def test_pinv_identity_and_vector():
    np.testing.assert_allclose(pseudo_inverse(np.eye(2)).matrix, np.eye(2), atol=1e-15)
    p = pseudo_inverse(np.array([[3.0], [4.0]]))
    np.testing.assert_allclose(p.matrix, [[0.12, 0.16]], atol=1e-15)


def test_pinv_random_identities(rng):
    v = rng.standard_normal((50, 8))
    p = pseudo_inverse(v)
    assert p.matrix.shape == (8, 50)
    assert p.rank == 8
    assert max(moore_penrose_residuals(v, p.matrix)) < 1e-8
    np.testing.assert_allclose(p.factor_a * p.singular_values @ p.factor_b.T, v, atol=1e-12)


def test_pinv_zero_matrix_is_flagged():
    with pytest.warns(NumericalWarning):
        p = pseudo_inverse(np.zeros((5, 3)))
    assert p.degenerate
    np.testing.assert_array_equal(p.matrix, np.zeros((3, 5)))


def test_pinv_drops_tiny_singular_values(rng):
    v = rng.standard_normal((40, 3)) @ rng.standard_normal((3, 6))  # rank 3
    p = pseudo_inverse(v)
    assert p.rank == 3
    assert max(moore_penrose_residuals(v, p.matrix)[:2]) < 1e-8


def test_pinv_of_orthonormal_columns_is_transpose(rng):
    q, _ = np.linalg.qr(rng.standard_normal((60, 7)))
    np.testing.assert_allclose(pseudo_inverse(q).matrix, q.T, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 40), st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_pinv_identities_property(n, d, seed):
    v = np.random.default_rng(seed).standard_normal((n, d))
    p = pseudo_inverse(v).matrix
    r = moore_penrose_residuals(v, p)
    assert r[0] < 1e-6 and r[1] < 1e-6


def test_matvec_basic(rng):
    x = rng.standard_normal(5)
    np.testing.assert_array_equal(matvec(np.eye(5), x), x)
    np.testing.assert_array_equal(matvec(np.zeros((3, 5)), x), np.zeros(3))
    a = sp.random(300, 200, density=0.05, random_state=2, format="csr")
    y = rng.standard_normal(200)
    np.testing.assert_allclose(matvec(a, y), a.toarray() @ y, atol=1e-12)


def test_matvec_dimension_mismatch():
    with pytest.raises(DimensionError):
        matvec(np.eye(3), np.ones(4))
