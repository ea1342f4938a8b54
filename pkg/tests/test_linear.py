import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matchctl.errors import AdmissibilityError
from matchctl.geometry import actuation_projection
from matchctl.linear import (
    LinearFeedback,
    LTISystem,
    jordan_oracle,
    lemma1_residual,
    lemma1_solve,
    random_admissible_instance,
    symmetric_basis,
    symmetric_solution_basis,
    theorem2_match,
    verify_theorem2,
)
from matchctl.matching import matching_residuals


def is_valid_lemma1(R, X):
    sv = np.linalg.svd(X, compute_uv=False)
    res_ok = lemma1_residual(R, X) <= 1e-10 * (1 + np.linalg.norm(R) * np.linalg.norm(X))
    return np.array_equal(X, X.T) and res_ok and sv[-1] / sv[0] > 1e-8


def test_nilpotent_block_example_is_a_solution():
    R = np.array([[0.0, 1.0], [0.0, 0.0]])
    X = np.array([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_array_equal(R @ X, [[1.0, 0.0], [0.0, 0.0]])
    assert lemma1_residual(R, X) == 0.0
    assert np.linalg.det(X) == pytest.approx(-1.0)
    assert is_valid_lemma1(R, lemma1_solve(R))


def test_symmetric_basis_is_orthonormal():
    B = symmetric_basis(3)
    assert len(B) == 6
    G = np.array([[np.sum(a * b) for b in B] for a in B])
    np.testing.assert_allclose(G, np.eye(6), atol=1e-15)


def test_solution_space_of_identity_is_everything():
    assert len(symmetric_solution_basis(np.eye(3))) == 6


def test_distinct_diagonal_admits_diagonal_solutions():
    R = np.diag([1.0, 2.0, -3.0])
    basis = symmetric_solution_basis(R)
    assert len(basis) == 3
    for X in basis:
        np.testing.assert_allclose(X - np.diag(np.diag(X)), 0.0, atol=1e-12)
    assert jordan_oracle(R).dimension == 3


def test_single_jordan_block_oracle_is_anti_identity_pattern():
    lam = 0.7
    R = lam * np.eye(3) + np.diag([1.0, 1.0], 1)
    res = jordan_oracle(R)
    assert res is not None and res.dimension == 3
    assert lemma1_residual(R, res.X) <= 1e-12
    assert abs(np.linalg.det(res.X)) > 1e-8


def test_rotation_block_oracle():
    R = np.array([[0.3, -1.2], [1.2, 0.3]])
    res = jordan_oracle(R)
    assert lemma1_residual(R, res.X) <= 1e-12
    assert abs(np.linalg.det(res.X)) > 1e-8
    assert res.dimension == len(symmetric_solution_basis(R))


def test_oracle_declines_large_n():
    assert jordan_oracle(np.eye(5)) is None


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1), st.floats(0.1, 10.0))
def test_lemma1_random_and_scaling_covariance(n, seed, c):
    R = np.random.default_rng(seed).normal(size=(n, n))
    X = lemma1_solve(R)
    assert is_valid_lemma1(R, X)
    assert lemma1_residual(c * R, X) <= 1e-10 * (1 + np.linalg.norm(c * R) * np.linalg.norm(X))
    assert lemma1_residual(-c * R, X) <= 1e-10 * (1 + np.linalg.norm(c * R) * np.linalg.norm(X))


def test_lemma1_is_deterministic():
    R = np.random.default_rng(3).normal(size=(4, 4))
    np.testing.assert_array_equal(lemma1_solve(R), lemma1_solve(R))


def test_scalar_case_exact():
    sys = LTISystem(g=[[2.0]], V2=[[1.0]], v1=[0.0], C2=[[0.5]], P=[[0.0]])
    fb = LinearFeedback(v=[0.3], a=[[-4.0]], b=[[1.5]])
    closed = theorem2_match(sys, fb)
    assert closed.g_hat[0, 0] != 0.0
    rng = np.random.default_rng(0)
    out = verify_theorem2(sys, fb, closed, rng)
    assert out["max_round_trip_error"] <= 1e-14


def test_full_actuation_example_by_hand():
    # P = 0: every feedback is admissible; with g_hat = g the data follow directly
    g = np.diag([1.0, 2.0])
    sys = LTISystem(g=g, V2=np.eye(2), v1=[0.0, 0.0], C2=np.zeros((2, 2)), P=np.zeros((2, 2)))
    fb = LinearFeedback(v=[0.0, 0.0], a=np.diag([3.0, 1.0]), b=np.diag([-1.0, -2.0]))
    closed = theorem2_match(sys, fb)
    M = np.linalg.solve(g, sys.V2 - fb.a)
    np.testing.assert_allclose(closed.V2_hat, closed.g_hat @ M, atol=1e-12)
    np.testing.assert_allclose(closed.C2_hat, closed.g_hat @ np.linalg.solve(g, -fb.b), atol=1e-12)


def test_inadmissible_feedback_names_constraint():
    g = np.eye(2)
    P = actuation_projection(g, np.array([[0.0], [1.0]]))
    sys = LTISystem(g=g, V2=np.eye(2), v1=[0.0, 0.0], C2=np.zeros((2, 2)), P=P)
    fb = LinearFeedback(v=[0.0, 0.0], a=[[1.0, 0.0], [0.0, 1.0]], b=np.zeros((2, 2)))
    with pytest.raises(AdmissibilityError, match="P g\\^-1 a"):
        theorem2_match(sys, fb)


def test_lti_system_validation():
    with pytest.raises(ValueError):
        LTISystem(g=[[1.0, 0.0], [0.0, -1.0]], V2=np.eye(2), v1=[0, 0], C2=np.eye(2), P=np.zeros((2, 2)))
    with pytest.raises(ValueError):
        LTISystem(g=np.eye(2), V2=np.eye(2), v1=[0, 0], C2=np.eye(2), P=[[1.0, 1.0], [0.0, 0.0]])


@pytest.mark.parametrize("seed", range(1, 11))
def test_theorem2_round_trip_n6(seed):
    rng = np.random.default_rng(seed)
    sys, fb = random_admissible_instance(6, rng)
    closed = theorem2_match(sys, fb)
    out = verify_theorem2(sys, fb, closed, rng)
    assert out["max_matching_residual"] <= 1e-9
    assert out["max_round_trip_error"] <= 1e-9
    r = matching_residuals(sys.lagrangian_system(), closed.closed_loop_spec(), np.zeros(6), np.ones(6))
    assert r.max_norm <= 1e-9 * (1 + np.abs(fb.a).max())
