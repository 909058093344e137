import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_design
from symreg.design import DesignPartition, SingularDesignError, projections, r_matrix


def dense_hat(X):
    return X @ np.linalg.inv(X.T @ X) @ X.T


class TestProjections:
    def test_intercept_only(self):
        rho = projections(DesignPartition(np.ones((2, 1)), 1))
        np.testing.assert_allclose(rho.z_diag, [0.5, 0.5])
        np.testing.assert_array_equal(rho.z2_diag, [0, 0])
        assert rho.rho_ZZ == pytest.approx(1.0)
        assert rho.rho_Z2Z2 == 0 and rho.rho_ZZ2 == 0

    def test_identity_design(self):
        # n must exceed p, so pad the identity with a zero row
        X = np.vstack([np.eye(2), [0.0, 0.0]])
        rho = projections(DesignPartition(X, 2))
        np.testing.assert_allclose(rho.z_diag, [1, 1, 0], atol=1e-15)
        assert rho.rho_ZZ == pytest.approx(3 * 2)

    def test_against_dense_products(self, rng):
        X = random_design(rng, 20, 4)
        part = DesignPartition(X, [1, 2, 3])
        Z, Z2 = dense_hat(X), dense_hat(part.X2)
        rho = part.projections()
        np.testing.assert_allclose(rho.z_diag, np.diag(Z), atol=1e-12)
        np.testing.assert_allclose(rho.z2_diag, np.diag(Z2), atol=1e-12)
        assert rho.z_diag.sum() == pytest.approx(4, abs=1e-10)
        assert rho.z2_diag.sum() == pytest.approx(1, abs=1e-10)
        assert rho.rho_ZZ == pytest.approx(20 * np.sum(np.diag(Z) ** 2), rel=1e-12)
        assert rho.rho_ZZ2 == pytest.approx(20 * np.sum(np.diag(Z) * np.diag(Z2)), rel=1e-12)

    def test_q_equals_p(self, rng):
        rho = DesignPartition(random_design(rng, 10, 3), 3).projections()
        assert np.all(rho.z2_diag == 0)


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(6, 40), p=st.integers(1, 5), data=st.data())
def test_projection_identities(seed, n, p, data):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    q = data.draw(st.integers(1, p))
    part = DesignPartition(X, q)
    Z, Z2 = dense_hat(X), (dense_hat(part.X2) if q < p else np.zeros((n, n)))
    np.testing.assert_allclose(Z @ Z, Z, atol=1e-10)
    np.testing.assert_allclose(Z, Z.T, atol=1e-10)
    np.testing.assert_allclose(Z2 @ Z2, Z2, atol=1e-10)
    rho = part.projections()
    assert rho.z_diag.sum() == pytest.approx(p, abs=1e-10)
    assert rho.z2_diag.sum() == pytest.approx(p - q, abs=1e-10)
    assert np.all(rho.z_diag >= rho.z2_diag - 1e-12)
    assert np.all(rho.z2_diag >= -1e-15)


@given(seed=st.integers(0, 2**32 - 1), c=st.floats(1e-3, 1e3))
def test_scale_and_reparameterization_invariance(seed, c):
    rng = np.random.default_rng(seed)
    X = random_design(rng, 15, 5)
    base = DesignPartition(X, [1, 2]).projections()
    scaled = DesignPartition(c * X, [1, 2]).projections()
    # mix the nuisance columns through an invertible map
    A = rng.standard_normal((3, 3)) + 3 * np.eye(3)
    X_mixed = X.copy()
    X_mixed[:, [0, 3, 4]] = X[:, [0, 3, 4]] @ A
    mixed = DesignPartition(X_mixed, [1, 2]).projections()
    for other in (scaled, mixed):
        for name in ("rho_ZZ", "rho_Z2Z2", "rho_ZZ2"):
            assert getattr(other, name) == pytest.approx(getattr(base, name), rel=1e-10)


class TestRMatrix:
    def test_q_equals_p_is_gram(self, rng):
        X = random_design(rng, 12, 3)
        np.testing.assert_allclose(r_matrix(DesignPartition(X, 3)), X.T @ X, rtol=1e-12)

    def test_single_column(self):
        assert r_matrix(DesignPartition(np.ones((2, 1)), 1))[0, 0] == pytest.approx(2.0)

    def test_orthogonal_blocks(self):
        X1 = np.array([[1.0], [1.0], [-1.0], [-1.0]])
        X2 = np.array([[1.0], [-1.0], [1.0], [-1.0]])
        part = DesignPartition(np.hstack([X1, X2]), 1)
        assert r_matrix(part)[0, 0] == pytest.approx(4.0)

    def test_against_residual_matrix(self, rng):
        X = random_design(rng, 25, 5)
        part = DesignPartition(X, [4, 1])
        X1, X2 = X[:, [4, 1]], X[:, [0, 2, 3]]
        R = X1 - dense_hat(X2) @ X1
        np.testing.assert_allclose(r_matrix(part), R.T @ R, rtol=1e-10)
        assert np.all(np.linalg.eigvalsh(r_matrix(part)) > 0)


class TestPartition:
    def test_permutation(self, rng):
        X = random_design(rng, 10, 4)
        part = DesignPartition(X, [3, 1], beta10=[5.0, 6.0])
        assert list(part.order) == [3, 1, 0, 2]
        np.testing.assert_array_equal(part.X1, X[:, [3, 1]])
        np.testing.assert_array_equal(part.offset, X[:, 3] * 5 + X[:, 1] * 6)
        full = part.full_beta([5.0, 6.0], [7.0, 8.0])
        np.testing.assert_array_equal(full, [7, 6, 8, 5])
        b1, b2 = part.split_beta(full)
        np.testing.assert_array_equal(b1, [5, 6])
        np.testing.assert_array_equal(b2, [7, 8])

    def test_rank_deficient_names_column(self, rng):
        X = random_design(rng, 10, 3)
        X = np.column_stack([X, X[:, 1] + 2 * X[:, 2]])
        with pytest.raises(SingularDesignError, match="linear combination"):
            DesignPartition(X, 1, names=["a", "b", "c", "d"])

    def test_zero_column(self, rng):
        X = np.column_stack([np.ones(5), np.zeros(5)])
        with pytest.raises(SingularDesignError):
            DesignPartition(X, 1)

    def test_needs_more_rows(self):
        with pytest.raises(SingularDesignError, match="n > p"):
            DesignPartition(np.eye(2), 1)

    @pytest.mark.parametrize("test", [[], [0, 0], [5]])
    def test_bad_test_indices(self, rng, test):
        with pytest.raises(ValueError):
            DesignPartition(random_design(rng, 10, 3), test)

    def test_beta10_length(self, rng):
        with pytest.raises(ValueError):
            DesignPartition(random_design(rng, 10, 3), [1], beta10=[0, 0])
