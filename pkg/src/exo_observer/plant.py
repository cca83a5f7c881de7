"""True system, exosystem, reference signal and P-controller."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .mathkit import IntegrationDivergedError, OdeSystem, rk4_step


class SimulationDivergedError(RuntimeError):
    def __init__(self, t: float, detail: str = ""):
        self.t = t
        msg = f"simulation diverged at t={t:.6g}"
        super().__init__(f"{msg}: {detail}" if detail else msg)


@dataclass(frozen=True)
class PlantModel:
    """``x' = A x + B u + D delta``, ``y = C^T x``."""

    A: np.ndarray
    B: np.ndarray
    D: np.ndarray
    C: np.ndarray

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def observability_rank(self) -> int:
        rows = [self.C]
        for _ in range(self.n - 1):
            rows.append(rows[-1] @ self.A)
        return int(np.linalg.matrix_rank(np.vstack(rows)))


@dataclass(frozen=True)
class ExoModel:
    """Known autonomous disturbance generator with unknown initial state."""

    A_delta: np.ndarray
    h_delta: np.ndarray
    x_delta0: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A_delta, dtype=float)
        h = np.asarray(self.h_delta, dtype=float)
        rows = [h]
        for _ in range(A.shape[0] - 1):
            rows.append(rows[-1] @ A)
        if np.linalg.matrix_rank(np.vstack(rows)) < A.shape[0]:
            raise ValueError("exosystem pair (h_delta^T, A_delta) is not observable")

    @property
    def n_delta(self) -> int:
        return self.A_delta.shape[0]


@dataclass(frozen=True)
class PlantState:
    x: np.ndarray
    x_delta: np.ndarray
    Phi_delta: np.ndarray
    t: float = 0.0

    @classmethod
    def initial(cls, x0, exo: ExoModel, t0: float = 0.0) -> "PlantState":
        return cls(
            x=np.asarray(x0, dtype=float).copy(),
            x_delta=np.asarray(exo.x_delta0, dtype=float).copy(),
            Phi_delta=np.eye(exo.n_delta),
            t=t0,
        )

    def output(self, model: PlantModel) -> float:
        return float(model.C @ self.x)

    def disturbance(self, exo: ExoModel) -> float:
        return float(exo.h_delta @ self.x_delta)


def benchmark_model(theta) -> PlantModel:
    """Third-order benchmark plant with parameters ``theta = (t1, t2, t3)``."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (3,):
        raise ValueError(f"benchmark plant needs 3 parameters, got shape {theta.shape}")
    t1, t2, t3 = theta
    A = np.array([[0.0, t1 + t2, 0.0], [-t2, 0.0, t2], [0.0, -t3, 0.0]])
    B = np.array([0.0, 0.0, t3])
    D = np.array([t1 * t2, 0.0, 0.0])
    C = np.array([0.0, 0.0, 1.0])
    return PlantModel(A, B, D, C)


@njit(cache=True)
def reference_nb(t, t_eps, offset, amplitude, omega, decay):
    # envelope held constant before t_eps, decays afterwards
    env = amplitude
    if t >= t_eps:
        env = amplitude * np.exp(-decay * (t - t_eps))
    return offset + env * np.sin(omega * t)


def reference(t: float, t_eps: float = 25.0, offset: float = 100.0, amplitude: float = 2.5,
              omega: float = 10.0, decay: float = 1.0) -> float:
    """Set-point ``r(t) = offset + amplitude * env(t) * sin(omega t)``.

    ``env`` is 1 before ``t_eps`` and ``exp(-decay (t - t_eps))`` afterwards,
    so the signal is continuous and settles at ``offset``.
    """
    return float(reference_nb(t, t_eps, offset, amplitude, omega, decay))


@njit(cache=True)
def control_nb(r, y, gain):
    return -gain * (r - y)


def control(r: float, y: float, gain: float = 75.0) -> float:
    return float(control_nb(r, y, gain))


@njit(cache=True)
def plant_rhs_nb(x, xd, Phi, u, A, B, D, Ad, hd, dx, dxd, dPhi):
    """Write the joint plant/exosystem/fundamental-matrix derivatives."""
    delta = hd @ xd
    dx[:] = A @ x + B * u + D * delta
    dxd[:] = Ad @ xd
    dPhi[:, :] = Ad @ Phi


def step_true_system(state: PlantState, model: PlantModel, exo: ExoModel, u: float, h: float) -> PlantState:
    """One RK4 step of plant, exosystem and fundamental matrix, ``u`` held."""
    n, nd = model.n, exo.n_delta
    A = np.ascontiguousarray(model.A, dtype=float)
    B = np.asarray(model.B, dtype=float)
    D = np.asarray(model.D, dtype=float)
    Ad = np.ascontiguousarray(exo.A_delta, dtype=float)
    hd = np.asarray(exo.h_delta, dtype=float)

    def rhs(t, s):
        ds = np.empty_like(s)
        plant_rhs_nb(
            s[:n], s[n:n + nd], s[n + nd:].reshape(nd, nd), float(u), A, B, D, Ad, hd,
            ds[:n], ds[n:n + nd], ds[n + nd:].reshape(nd, nd),
        )
        return ds

    s0 = np.concatenate([state.x, state.x_delta, state.Phi_delta.ravel()])
    try:
        s1 = rk4_step(OdeSystem(s0.size, rhs), state.t, s0, h)
    except IntegrationDivergedError as exc:
        raise SimulationDivergedError(exc.t, str(exc)) from exc
    return PlantState(s1[:n], s1[n:n + nd], s1[n + nd:].reshape(nd, nd), state.t + h)
