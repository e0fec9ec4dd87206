import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from mgmpcg.sparse import (
    CsrMatrix,
    GramFactor,
    IndefiniteOperatorError,
    galerkin_triple_product,
    gram_solve,
    read_matrix_market,
    spmv,
    transpose,
    write_matrix_market,
)

from conftest import random_sparse, random_spd


def test_spmv_matches_dense(rng):
    A = random_sparse(rng, 5, 5, 12)
    x = rng.standard_normal(5)
    assert A.nnz == 12
    np.testing.assert_allclose(spmv(A, x), A.to_dense() @ x, rtol=0, atol=1e-14)


def test_spmv_small_hand_example():
    A = CsrMatrix(2, 3, [0, 2, 3], [0, 2, 1], [1.0, 2.0, -3.0])
    np.testing.assert_array_equal(spmv(A, np.array([1.0, 10.0, 100.0])), [201.0, -30.0])


def test_transpose_matches_dense(rng):
    A = random_sparse(rng, 6, 4, 10)
    At = transpose(A)
    assert At.shape == (4, 6)
    np.testing.assert_array_equal(At.to_dense(), A.to_dense().T)
    np.testing.assert_array_equal(transpose(At).to_dense(), A.to_dense())


def test_matmul_block(rng):
    A = random_sparse(rng, 7, 5, 15)
    X = rng.standard_normal((5, 3))
    np.testing.assert_allclose(A @ X, A.to_dense() @ X, atol=1e-14)


def test_invariants_rejected():
    with pytest.raises(ValueError):
        CsrMatrix(2, 2, [0, 1], [0], [1.0])
    with pytest.raises(ValueError):
        CsrMatrix(1, 3, [0, 2], [2, 1], [1.0, 1.0])
    with pytest.raises(ValueError):
        CsrMatrix(1, 2, [0, 1], [2], [1.0])
    with pytest.raises(ValueError):
        CsrMatrix.from_dense([[1.0, 2.0], [0.0, 1.0]], symmetric=True)


def test_dimension_mismatch():
    A = CsrMatrix.identity(3)
    with pytest.raises(ValueError):
        spmv(A, np.ones(4))


def test_galerkin_matches_dense(rng):
    A = CsrMatrix.from_dense(random_spd(rng, 6), symmetric=True)
    P = random_sparse(rng, 6, 3, 9)
    C = galerkin_triple_product(transpose(P), A, P)
    Pd = P.to_dense()
    np.testing.assert_allclose(C.to_dense(), Pd.T @ A.to_dense() @ Pd, rtol=0, atol=1e-12)
    assert C.symmetric
    np.testing.assert_array_equal(C.to_dense(), C.to_dense().T)


def test_galerkin_rejects_non_transpose(rng):
    A = CsrMatrix.from_dense(random_spd(rng, 4), symmetric=True)
    P = random_sparse(rng, 4, 2, 5)
    R = CsrMatrix.from_dense(transpose(P).to_dense() + 1.0)
    with pytest.raises(ValueError):
        galerkin_triple_product(R, A, P)


def test_gram_solve_full_rank_matches_lu(rng):
    G = random_spd(rng, 4, cond=100.0)
    rhs = rng.standard_normal(4)
    alpha, deficient = gram_solve(G, rhs)
    assert not deficient
    expect = scipy.linalg.lu_solve(scipy.linalg.lu_factor(G), rhs)
    np.testing.assert_allclose(alpha, expect, rtol=1e-12, atol=1e-12)


def test_gram_solve_singular_gives_minimum_norm():
    G = np.array([[1.0, 1.0], [1.0, 1.0]])
    alpha, deficient = gram_solve(G, np.array([2.0, 2.0]))
    assert deficient
    np.testing.assert_allclose(alpha, [1.0, 1.0], atol=1e-14)


def test_gram_solve_duplicate_column_block(rng):
    # Two identical directions: the combined step must be the single-direction step.
    B = random_spd(rng, 5)
    p = rng.standard_normal(5)
    r = rng.standard_normal(5)
    P = np.column_stack([p, p])
    alpha, deficient = gram_solve(P.T @ B @ P, P.T @ r)
    assert deficient
    np.testing.assert_allclose(P @ alpha, p * (p @ r) / (p @ B @ p), rtol=1e-12)


def test_gram_indefinite_raises():
    with pytest.raises(IndefiniteOperatorError):
        GramFactor(np.diag([1.0, -0.5]))


def test_gram_zero_matrix_has_rank_zero():
    f = GramFactor(np.zeros((3, 3)))
    assert f.rank == 0 and f.rank_deficient
    np.testing.assert_array_equal(f.solve(np.ones(3)), np.zeros(3))


def test_matrix_market_round_trip(tmp_path, rng):
    A = CsrMatrix.from_dense(random_spd(rng, 5), symmetric=True)
    path = tmp_path / "a.mtx"
    write_matrix_market(path, A)
    B = read_matrix_market(path)
    assert B.symmetric
    np.testing.assert_allclose(B.to_dense(), A.to_dense(), rtol=1e-15)


@st.composite
def sparse_and_vectors(draw):
    nrows = draw(st.integers(1, 12))
    ncols = draw(st.integers(1, 12))
    nnz = draw(st.integers(0, nrows * ncols))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    return random_sparse(rng, nrows, ncols, nnz), rng.standard_normal(ncols), rng.standard_normal(ncols)


@settings(max_examples=150)
@given(sparse_and_vectors(), st.floats(-10, 10), st.floats(-10, 10))
def test_spmv_linear_and_dense_consistent(data, a, b):
    A, x, y = data
    lhs = spmv(A, a * x + b * y)
    rhs = a * spmv(A, x) + b * spmv(A, y)
    scale = 1.0 + np.abs(A.values).sum() * (abs(a) + abs(b)) * max(np.abs(x).max(), np.abs(y).max())
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-13 * scale)
    np.testing.assert_allclose(spmv(A, x), A.to_dense() @ x, rtol=0, atol=1e-13 * scale)


@settings(max_examples=150)
@given(sparse_and_vectors())
def test_transpose_involution_and_adjoint(data):
    A, x, _ = data
    At = transpose(A)
    assert transpose(At).to_dense().tolist() == A.to_dense().tolist()
    y = np.random.default_rng(0).standard_normal(A.nrows)
    scale = 1.0 + np.abs(A.values).sum() * np.abs(x).max() * np.abs(y).max()
    assert abs(y @ spmv(A, x) - x @ spmv(At, y)) <= 1e-13 * scale
