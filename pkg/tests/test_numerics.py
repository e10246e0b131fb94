import numpy as np
import pytest
from scipy import sparse

from balance_lab.errors import ConvergenceError, UsageError
from balance_lab.numerics import (RandomSource, SparseSymMatrix, as_source, cg_solve, integrate_z_squared,
                                  svd_topk)
from oracles import dense_solve, power_iteration_singular_values, riccati_closed_form


# --- random streams --------------------------------------------------------

def test_children_depend_only_on_seed_and_label():
    a = RandomSource(7)
    a.random(100)
    b = RandomSource(7)
    assert np.array_equal(a.child("x").random(5), b.child("x").random(5))
    assert not np.array_equal(b.child("x").random(5), b.child("y").random(5))


def test_equal_seeds_give_identical_draws():
    assert np.array_equal(RandomSource(3).normal(size=10), RandomSource(3).normal(size=10))


def test_as_source_requires_explicit_seed():
    with pytest.raises(UsageError):
        as_source(None)
    with pytest.raises(UsageError):
        RandomSource(-1)


# --- conjugate gradients ---------------------------------------------------

def test_cg_identity():
    b = np.array([3.0, -1.0, 2.0, 0.5, 7.0])
    assert np.allclose(cg_solve(np.eye(5), b), b)


def test_cg_diagonal():
    x = cg_solve(np.diag([1.0, 2.0, 4.0]), np.array([1.0, 2.0, 4.0]))
    assert np.allclose(x, 1.0, atol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_cg_matches_dense_solve(seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(8, 8))
    A = M.T @ M + np.eye(8)
    b = rng.normal(size=8)
    x = cg_solve(A, b, tol=1e-12)
    ref = dense_solve(A, b)
    assert np.linalg.norm(x - ref) / np.linalg.norm(ref) <= 1e-8


def test_cg_sparse_input_and_zero_rhs():
    A = sparse.diags([2.0, 3.0, 4.0])
    assert np.array_equal(cg_solve(A, np.zeros(3)), np.zeros(3))
    assert np.allclose(cg_solve(SparseSymMatrix(A), np.ones(3)), [0.5, 1 / 3, 0.25])


def test_cg_iteration_cap_raises():
    rng = np.random.default_rng(0)
    M = rng.normal(size=(30, 30))
    A = M.T @ M + 1e-3 * np.eye(30)
    with pytest.raises(ConvergenceError) as err:
        cg_solve(A, rng.normal(size=30), tol=1e-14, max_iter=2)
    assert err.value.iterations == 2


def test_cg_rejects_bad_shapes():
    with pytest.raises(UsageError):
        cg_solve(np.eye(3), np.ones(4))
    with pytest.raises(UsageError):
        SparseSymMatrix(np.ones((2, 3)))


def test_from_entries_mirrors_and_sums():
    M = SparseSymMatrix.from_entries(3, [0, 0, 1, 0], [0, 1, 2, 1], [1.0, 2.0, 3.0, 1.0]).toarray()
    assert np.array_equal(M, [[1, 3, 0], [3, 0, 3], [0, 3, 0]])


# --- truncated SVD ---------------------------------------------------------

def test_svd_rank_one():
    u, v = np.array([1.0, 2.0, 2.0]), np.array([3.0, 4.0])
    _, s = svd_topk(np.outer(u, v), 1)
    assert np.isclose(s[0], np.linalg.norm(u) * np.linalg.norm(v))


def test_svd_identity():
    _, s = svd_topk(np.eye(4), 4)
    assert np.allclose(s, 1.0)


def test_svd_matches_power_iteration():
    X = np.random.default_rng(1).normal(size=(10, 6))
    _, s = svd_topk(X, 3)
    assert np.allclose(s, power_iteration_singular_values(X, 3), rtol=1e-6)


def test_svd_reconstruction_error_non_increasing():
    X = np.random.default_rng(2).normal(size=(20, 8))
    errs = []
    for k in range(1, 9):
        V, _ = svd_topk(X, k)
        errs.append(np.linalg.norm(X - X @ V @ V.T))
    assert all(b <= a + 1e-10 for a, b in zip(errs, errs[1:]))


def test_svd_signs_are_fixed():
    X = np.random.default_rng(3).normal(size=(12, 5))
    V, _ = svd_topk(X, 3)
    piv = np.argmax(np.abs(V), axis=0)
    assert np.all(V[piv, np.arange(3)] > 0)


def test_svd_rejects_bad_k():
    with pytest.raises(UsageError):
        svd_topk(np.eye(3), 4)


# --- Riccati integrator ----------------------------------------------------

def test_scalar_blowup():
    res = integrate_z_squared(np.array([[1.0]]))
    assert res.blew_up
    assert abs(res.t_sing - 1.0) <= 0.01
    for t, Z in zip(res.times, res.states):
        if t <= 0.9:
            assert abs(Z[0, 0] - 1.0 / (1.0 - t)) <= 1e-6


def test_scalar_decay():
    res = integrate_z_squared(np.array([[-1.0]]), horizon=10.0)
    assert not res.blew_up
    assert res.t_sing == float("inf")
    assert abs(res.Z_s[0, 0] + 1.0 / 11.0) <= 1e-8


@pytest.mark.parametrize("seed", range(5))
def test_matches_closed_form(seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(6, 6))
    Z0 = (M + M.T) / 2
    lam = np.linalg.eigvalsh(Z0)[-1]
    res = integrate_z_squared(Z0)
    assert abs(res.t_sing - 1.0 / lam) <= 0.01 / lam
    for t, Z in zip(res.times, res.states):
        if t <= 0.9 * res.t_sing:
            assert np.max(np.abs(Z - riccati_closed_form(Z0, t))) <= 1e-6


def test_trajectory_stays_symmetric():
    rng = np.random.default_rng(9)
    M = rng.normal(size=(7, 7))
    res = integrate_z_squared(M + M.T)
    assert max(np.max(np.abs(Z - Z.T)) for Z in res.states) <= 1e-9


def test_threshold_must_exceed_initial_state():
    with pytest.raises(UsageError):
        integrate_z_squared(np.array([[5.0]]), blowup_threshold=1.0)


def test_zero_diagonal_mode_keeps_diagonal_zero():
    Z0 = np.array([[0.0, 1.0, -0.5], [1.0, 0.0, 0.3], [-0.5, 0.3, 0.0]])
    res = integrate_z_squared(Z0, zero_diagonal=True)
    assert all(np.all(np.diag(Z) == 0) for Z in res.states)
