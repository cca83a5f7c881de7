import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from exo_observer.mathkit import (
    IntegrationDivergedError,
    NotSymmetricError,
    OdeSystem,
    SingularMatrixError,
    SpectraOverlapError,
    adj_dot_nb,
    adjugate,
    det,
    det_nb,
    inverse,
    min_eig_sym,
    rk4_integrate,
    rk4_step,
    solve_sylvester,
)

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def test_rk4_exponential_decay():
    sys = OdeSystem(1, lambda t, x: -x)
    x = rk4_integrate(sys, 0.0, np.array([1.0]), 0.01, 100)
    assert abs(x[0] - np.exp(-1.0)) < 1e-9


def test_rk4_fourth_order():
    sys = OdeSystem(2, lambda t, x: np.array([x[1], -x[0]]))
    errs = []
    for h in (0.1, 0.05):
        x = rk4_integrate(sys, 0.0, np.array([1.0, 0.0]), h, int(round(2.0 / h)))
        errs.append(abs(x[0] - np.cos(2.0)))
    assert 12 < errs[0] / errs[1] < 20


def test_rk4_time_varying():
    sys = OdeSystem(1, lambda t, x: np.array([np.cos(t)]))
    x = rk4_integrate(sys, 0.0, np.zeros(1), 1e-2, 100)
    assert abs(x[0] - np.sin(1.0)) < 1e-10


def test_rk4_rejects_bad_step_and_shape():
    sys = OdeSystem(1, lambda t, x: x)
    with pytest.raises(ValueError):
        rk4_step(sys, 0.0, np.ones(1), 0.0)
    with pytest.raises(ValueError):
        rk4_step(sys, 0.0, np.ones(2), 0.1)


def test_rk4_divergence_names_component():
    sys = OdeSystem(2, lambda t, x: np.array([0.0, np.inf]))
    with pytest.raises(IntegrationDivergedError) as info:
        rk4_step(sys, 1.5, np.zeros(2), 0.1)
    assert info.value.component == 1 and info.value.t == 1.5


def test_det_small_cases():
    assert det([[2.0]]) == 2.0
    assert det([[1, 2], [3, 4]]) == -2.0
    assert det(np.eye(3) * 2) == 8.0


@settings(max_examples=60, deadline=None)
@given(arrays(float, (4, 4), elements=finite))
def test_adjugate_identity(M):
    A = adjugate(M)
    d = det(M)
    scale = max(np.abs(M).max(), 1.0) ** 4
    assert np.allclose(A @ M, d * np.eye(4), atol=1e-9 * scale)
    assert np.allclose(M @ A, d * np.eye(4), atol=1e-9 * scale)


@settings(max_examples=60, deadline=None)
@given(arrays(float, (6, 6), elements=finite), arrays(float, 6, elements=finite))
def test_numba_kernels_match_numpy(M, v):
    scale = max(np.abs(M).max(), 1.0) ** 6
    assert abs(det_nb(M) - np.linalg.det(M)) <= 1e-9 * scale
    assert np.allclose(adj_dot_nb(M, v), adjugate(M) @ v, atol=1e-8 * scale * max(np.abs(v).max(), 1.0))


def test_adjugate_of_singular_matrix():
    M = np.array([[1.0, 2.0], [2.0, 4.0]])
    assert np.allclose(adjugate(M), [[4.0, -2.0], [-2.0, 1.0]])
    assert det_nb(np.zeros((3, 3))) == 0.0
    assert np.all(adj_dot_nb(np.zeros((6, 6)), np.ones(6)) == 0.0)


def test_inverse_and_singular():
    M = np.array([[4.0, 7.0], [2.0, 6.0]])
    assert np.allclose(inverse(M) @ M, np.eye(2))
    with pytest.raises(SingularMatrixError):
        inverse([[1.0, 2.0], [2.0, 4.0]])


def test_sylvester_paper_gain():
    A = np.array([[0.0, 1.0], [-10.0, 0.0]])
    G = np.array([[-4.0, 1.0], [-2.0, 0.0]])
    Q = np.outer([1.0, 2.0], [0.0, 1.0])
    M = solve_sylvester(A, G, Q)
    assert np.allclose(M, [[5 / 7, 3 / 28], [25 / 14, 1 / 7]], atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(arrays(float, (3, 3), elements=finite), arrays(float, (2, 3), elements=finite))
def test_sylvester_residual(A, Q):
    G = np.array([[-20.0, 1.0], [0.0, -25.0]])
    M = solve_sylvester(A, G, Q)
    assert np.allclose(M @ A - G @ M, Q, atol=1e-9 * max(np.abs(Q).max(), 1.0))


def test_sylvester_overlap():
    with pytest.raises(SpectraOverlapError):
        solve_sylvester(np.eye(2), np.eye(2), np.ones((2, 2)))


def test_min_eig_sym():
    assert min_eig_sym(np.diag([3.0, 0.3, 1.0])) == pytest.approx(0.3)
    with pytest.raises(NotSymmetricError):
        min_eig_sym([[1.0, 1.0], [0.0, 1.0]])


# documented examples


def test_rk4_examples():
    zero = OdeSystem(2, lambda t, x: np.zeros(2))
    assert np.array_equal(rk4_step(zero, 0.0, np.array([3.0, -1.0]), 0.01), [3.0, -1.0])
    grow = OdeSystem(1, lambda t, x: x)
    assert abs(rk4_step(grow, 0.0, np.ones(1), 0.1)[0] - 1.105170918) < 1e-7
    Ad = np.array([[0.0, 1.0], [-10.0, 0.0]])
    osc = OdeSystem(2, lambda t, x: Ad @ x)
    x = rk4_integrate(osc, 0.0, np.array([1.0, 0.0]), 1e-4, 10000)
    w = np.sqrt(10.0)
    assert np.allclose(x, [np.cos(w), -w * np.sin(w)], atol=1e-6)


def test_rk4_order_on_growth():
    grow = OdeSystem(1, lambda t, x: x)
    e1 = abs(rk4_integrate(grow, 0.0, np.ones(1), 0.1, 10)[0] - np.e)
    e2 = abs(rk4_integrate(grow, 0.0, np.ones(1), 0.05, 20)[0] - np.e)
    assert e1 / e2 >= 15


def test_det_adjugate_inverse_examples():
    assert det(np.eye(3)) == 1.0
    assert np.array_equal(adjugate(np.eye(3)), np.eye(3))
    M = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])
    assert det(M) == 1.0
    assert np.allclose(inverse(M), [[1, 0, -1], [0, 1, 0], [1, 0, 0]], atol=1e-15)


def test_adjugate_random_4x4_and_large_singular():
    rng = np.random.default_rng(0)
    for _ in range(50):
        M = rng.normal(size=(4, 4))
        err = np.linalg.norm(adjugate(M) @ M - det(M) * np.eye(4))
        assert err <= 1e-10 * np.linalg.norm(M) ** 4
    # rank-deficient 6x6 exercises the cofactor fallback
    v = rng.normal(size=(6, 5))
    S = v @ v.T
    A = adjugate(S)
    assert np.allclose(A @ S, det(S) * np.eye(6), atol=1e-8 * np.abs(S).max() ** 6)


def test_sylvester_examples():
    A = np.diag([1.0, 2.0])
    G = np.diag([3.0, 4.0])
    assert np.array_equal(solve_sylvester(A, G, np.zeros((2, 2))), np.zeros((2, 2)))
    Ad = np.array([[0.0, 1.0], [-10.0, 0.0]])
    Gp = np.array([[-4.0, 1.0], [-2.0, 0.0]])
    Q = np.outer([1.0, 2.0], [0.0, 1.0])
    M = solve_sylvester(Ad, Gp, Q)
    assert np.linalg.norm(M @ Ad - Gp @ M - Q) <= 1e-12


def test_min_eig_examples():
    assert min_eig_sym(np.zeros((3, 3))) == 0.0
    assert min_eig_sym(np.eye(6)) == pytest.approx(1.0)
    v = np.array([1.0, 2.0, 3.0])
    assert abs(min_eig_sym(np.outer(v, v))) < 1e-12
