import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from exo_observer.plant import (
    ExoModel,
    PlantState,
    SimulationDivergedError,
    benchmark_model,
    control,
    reference,
    step_true_system,
)

AD = np.array([[0.0, 1.0], [-10.0, 0.0]])
W = np.sqrt(10.0)


def exo(x0=(500.0, 100.0)):
    return ExoModel(AD, np.array([1.0, 0.0]), np.asarray(x0, dtype=float))


def test_benchmark_model_nominal():
    m = benchmark_model([1, 1, -1])
    assert np.array_equal(m.A, [[0, 2, 0], [-1, 0, 1], [0, 1, 0]])
    assert np.array_equal(m.B, [0, 0, -1])
    assert np.array_equal(m.D, [1, 0, 0])
    assert np.array_equal(m.C, [0, 0, 1])
    assert m.observability_rank() == 3


def test_benchmark_model_substitution():
    z = benchmark_model([0, 0, 0])
    assert not z.A.any() and not z.B.any() and not z.D.any()
    m = benchmark_model([2, 3, 5])
    assert m.A[1, 2] == 3 and m.A[2, 1] == -5
    assert m.A[0, 1] == 5 and m.A[1, 0] == -3
    assert np.array_equal(m.D, [6, 0, 0])


def test_benchmark_model_shape_check():
    with pytest.raises(ValueError):
        benchmark_model([1, 2])


def test_unobservable_exosystem_rejected():
    with pytest.raises(ValueError):
        ExoModel(np.diag([1.0, 2.0]), np.array([1.0, 0.0]), np.zeros(2))


def test_equilibrium_stays_zero():
    e = exo((0.0, 0.0))
    s = PlantState.initial(np.zeros(3), e)
    m = benchmark_model([1, 1, -1])
    for _ in range(10):
        s = step_true_system(s, m, e, 0.0, 1e-3)
    assert not s.x.any() and not s.x_delta.any()


def test_exosystem_oscillator_and_fundamental_matrix():
    e = exo((1.0, 0.0))
    m = benchmark_model([1, 1, -1])
    s = PlantState.initial(np.zeros(3), e)
    h = 1e-4
    for _ in range(10000):
        s = step_true_system(s, m, e, 0.0, h)
    assert abs(s.disturbance(e) - np.cos(W)) < 1e-6
    assert np.linalg.norm(s.x_delta - s.Phi_delta @ e.x_delta0) <= 1e-8


def test_fundamental_solution_long_horizon():
    # plant-free check over a long horizon with the benchmark exosystem
    e = exo()
    m = benchmark_model([0, 0, 0])
    s = PlantState.initial(np.zeros(3), e)
    h = 1e-3
    peak = 0.0
    for _ in range(20000):
        s = step_true_system(s, m, e, 0.0, h)
        peak = max(peak, abs(s.disturbance(e)))
    assert np.linalg.norm(s.x_delta - s.Phi_delta @ e.x_delta0) <= 1e-8 * np.linalg.norm(e.x_delta0)
    bound = np.hypot(500.0, 100.0 / W)
    assert peak <= bound * (1 + 1e-6)


def test_divergence_raises_with_time():
    e = exo()
    m = benchmark_model([1, 1, -1])
    s = PlantState.initial(np.full(3, 1e307), e)
    with np.errstate(over="ignore", invalid="ignore"), pytest.raises(SimulationDivergedError) as info:
        step_true_system(s, m, e, 0.0, 10.0)
    assert info.value.t == 0.0


def test_control_examples():
    assert control(3.0, 3.0) == 0.0
    assert control(100.0, 99.0) == -75.0


def test_reference_envelope():
    assert reference(1e4) == pytest.approx(100.0, abs=1e-12)
    t = 25.0
    assert reference(t - 1e-9) == pytest.approx(reference(t), abs=1e-6)
    assert reference(1.0) == pytest.approx(100 + 2.5 * np.sin(10.0))
    assert reference(27.0) == pytest.approx(100 + 2.5 * np.exp(-2.0) * np.sin(270.0))


@given(st.floats(0, 400))
def test_reference_bounded(t):
    assert 97.5 - 1e-9 <= reference(t) <= 102.5 + 1e-9
