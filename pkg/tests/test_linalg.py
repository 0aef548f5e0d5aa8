import numpy as np
import pytest

from feddecomp.errors import DegenerateAxisError, EmptyInputError, ShapeError
from feddecomp.linalg import EigenPair, gram, project, sym_eigen


class TestGram:
    def test_orthonormal_columns_give_identity(self):
        assert np.allclose(gram(np.eye(2), side="right"), np.eye(2))

    def test_single_column_hand_value(self):
        # column (1, 2): 1^2 + 2^2 = 5
        out = gram(np.array([[1.0], [2.0]]), side="right")
        assert out.shape == (1, 1)
        assert out[0, 0] == pytest.approx(5.0, abs=0)

    def test_two_column_hand_values(self):
        g = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        assert np.allclose(gram(g, side="right"), [[2.0, 1.0], [1.0, 2.0]])

    def test_left_side_shape_and_symmetry(self):
        rng = np.random.default_rng(0)
        g = rng.normal(size=(7, 3))
        left = gram(g, side="left")
        right = gram(g, side="right")
        assert left.shape == (7, 7)
        assert right.shape == (3, 3)
        assert np.max(np.abs(left - left.T)) <= 1e-12
        assert np.max(np.abs(right - right.T)) <= 1e-12

    def test_empty_matrix_rejected(self):
        with pytest.raises(EmptyInputError):
            gram(np.zeros((0, 0)))

    def test_bad_side_rejected(self):
        with pytest.raises(ValueError):
            gram(np.eye(2), side="up")


class TestSymEigen:
    def test_identity_spectrum(self):
        pairs = sym_eigen(np.eye(3))
        assert len(pairs) == 3
        assert all(p.value == pytest.approx(1.0, abs=1e-14) for p in pairs)

    def test_two_by_two_hand_decomposition(self):
        pairs = sym_eigen(np.array([[2.0, 1.0], [1.0, 2.0]]))
        assert [p.value for p in pairs] == pytest.approx([3.0, 1.0], abs=1e-12)
        v_plus = np.array([1.0, 1.0]) / np.sqrt(2)
        v_minus = np.array([1.0, -1.0]) / np.sqrt(2)
        assert abs(pairs[0].vector @ v_plus) == pytest.approx(1.0, abs=1e-12)
        assert abs(pairs[1].vector @ v_minus) == pytest.approx(1.0, abs=1e-12)

    def test_null_matrix(self):
        pairs = sym_eigen(np.zeros((2, 2)))
        assert [p.value for p in pairs] == [0.0, 0.0]
        assert all(p.rank_deficient for p in pairs)

    def test_non_square_rejected(self):
        with pytest.raises(ShapeError):
            sym_eigen(np.ones((2, 3)))

    def test_asymmetric_rejected(self):
        with pytest.raises(ShapeError):
            sym_eigen(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_sorted_descending_with_unit_vectors(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(6, 6))
        a = (a + a.T) / 2
        pairs = sym_eigen(a)
        values = [p.value for p in pairs]
        assert values == sorted(values, reverse=True)
        for p in pairs:
            assert np.linalg.norm(p.vector) == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("seed", range(10))
    def test_residuals_and_orthogonality(self, seed):
        rng = np.random.default_rng(seed)
        n = rng.integers(2, 9)
        a = rng.normal(size=(n, n))
        a = (a + a.T) / 2
        pairs = sym_eigen(a, tol=1e-8)
        norm = np.linalg.norm(a)
        vectors = np.column_stack([p.vector for p in pairs])
        for p in pairs:
            assert np.linalg.norm(a @ p.vector - p.value * p.vector) <= 1e-8 * norm
        off = vectors.T @ vectors - np.eye(n)
        assert np.max(np.abs(off)) <= 1e-8

    def test_rank_deficiency_flag(self):
        # rank-1 PSD matrix: second eigenvalue is numerically null
        v = np.array([1.0, 2.0])
        pairs = sym_eigen(np.outer(v, v))
        assert not pairs[0].rank_deficient
        assert pairs[1].rank_deficient


class TestBijection:
    """Small-side eigenvectors map through G onto the big-side ones."""

    @pytest.mark.parametrize("seed", range(25))
    def test_matches_direct_decomposition(self, seed):
        rng = np.random.default_rng(100 + seed)
        d = int(rng.integers(2, 21))
        m = int(rng.integers(1, 6))
        g = rng.normal(size=(d, m))

        small = sym_eigen(gram(g, side="right"))
        direct_vals, direct_vecs = np.linalg.eigh(gram(g, side="left") / m)
        direct_vals, direct_vecs = direct_vals[::-1], direct_vecs[:, ::-1]

        for z, pair in enumerate(small):
            if pair.rank_deficient:
                continue
            assert pair.value / m == pytest.approx(direct_vals[z], rel=1e-8)
            mapped = g @ pair.vector
            cos = abs(mapped @ direct_vecs[:, z]) / np.linalg.norm(mapped)
            assert cos >= 1.0 - 1e-8

    @pytest.mark.parametrize("seed", range(5))
    def test_spectral_reconstruction(self, seed):
        rng = np.random.default_rng(200 + seed)
        n = int(rng.integers(2, 8))
        a = rng.normal(size=(n, n))
        a = (a + a.T) / 2
        pairs = sym_eigen(a)
        rebuilt = sum(p.value * np.outer(p.vector, p.vector) for p in pairs)
        assert np.linalg.norm(rebuilt - a) <= 1e-8 * np.linalg.norm(a)


class TestProject:
    def test_coordinate_projection(self):
        assert np.allclose(project([3.0, 4.0], [1.0, 0.0]), [3.0, 0.0])

    def test_orthogonal_case(self):
        assert np.allclose(project([1.0, 1.0], [1.0, -1.0]), [0.0, 0.0])

    def test_diagonal_axis_hand_value(self):
        assert np.allclose(project([2.0, 0.0], [1.0, 1.0]), [1.0, 1.0])

    def test_zero_axis_rejected(self):
        with pytest.raises(DegenerateAxisError):
            project([1.0, 2.0], [0.0, 0.0])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            project([1.0, 2.0], [1.0, 2.0, 3.0])

    @pytest.mark.parametrize("seed", range(10))
    def test_residual_orthogonal_and_idempotent(self, seed):
        rng = np.random.default_rng(300 + seed)
        d = int(rng.integers(2, 12))
        g = rng.normal(size=d)
        axis = rng.normal(size=d)
        p = project(g, axis)
        # residual orthogonal to the axis
        assert abs((g - p) @ axis) <= 1e-10 * np.linalg.norm(g) * np.linalg.norm(axis)
        # parallel to the axis
        cross = np.outer(p, axis) - np.outer(axis, p)
        assert np.max(np.abs(cross)) <= 1e-10 * max(1.0, np.max(np.abs(np.outer(g, axis))))
        # idempotent
        assert np.allclose(project(p, axis), p, rtol=0, atol=1e-12 * np.linalg.norm(g))


def test_eigenpair_is_frozen():
    p = EigenPair(value=1.0, vector=np.array([1.0]))
    with pytest.raises(AttributeError):
        p.value = 2.0
