"""Observer canonical form of a plant and closed-form benchmark parameters.

Used as the truth channel for diagnostics and tests. The observer itself
never calls into this module.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mathkit import SINGULAR_TOL, det
from .plant import PlantModel, benchmark_model


class NotObservableError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class CanonicalDecomposition:
    T_I: np.ndarray
    T: np.ndarray
    psi_a: np.ndarray
    psi_b: np.ndarray
    psi_d: np.ndarray
    A0: np.ndarray
    C0: np.ndarray

    @property
    def eta(self) -> np.ndarray:
        return np.concatenate([self.psi_a, self.psi_b])

    @property
    def kappa(self) -> np.ndarray:
        return np.concatenate([self.psi_a, self.psi_b, self.psi_d])


def shift_matrix(n: int) -> np.ndarray:
    """``A0``: ones on the superdiagonal."""
    return np.eye(n, k=1)


def first_unit(n: int) -> np.ndarray:
    e = np.zeros(n)
    e[0] = 1.0
    return e


def observability_inverse(model: PlantModel) -> np.ndarray:
    """Stack ``C^T, C^T A, ..., C^T A^(n-1)`` row by row."""
    n = model.n
    rows = [np.asarray(model.C, dtype=float)]
    for _ in range(n - 1):
        rows.append(rows[-1] @ model.A)
    O_inv = np.vstack(rows)
    d = det(O_inv)
    if abs(d) < SINGULAR_TOL * max(np.linalg.norm(O_inv), 1e-300) ** n:
        raise NotObservableError(f"(C^T, A) is not observable (det={d:.3g})")
    return O_inv


def decompose(model: PlantModel) -> CanonicalDecomposition:
    n = model.n
    A = np.asarray(model.A, dtype=float)
    O_inv = observability_inverse(model)
    o_n = np.linalg.solve(O_inv, np.eye(n)[:, -1])
    cols = [o_n]
    for _ in range(n - 1):
        cols.append(A @ cols[-1])
    T_I = np.column_stack(cols[::-1])
    T = np.linalg.inv(T_I)
    A0 = shift_matrix(n)
    psi_a = (T @ A @ T_I - A0)[:, 0]
    return CanonicalDecomposition(
        T_I=T_I,
        T=T,
        psi_a=psi_a,
        psi_b=T @ model.B,
        psi_d=T @ model.D,
        A0=A0,
        C0=np.asarray(model.C, dtype=float) @ T_I,
    )


def decomposition_residuals(model: PlantModel, dec: CanonicalDecomposition) -> dict[str, float]:
    """Max-abs violation of each defining identity of the canonical form."""
    n = model.n
    e1 = first_unit(n)
    return {
        "T T_I = I": float(np.abs(dec.T @ dec.T_I - np.eye(n)).max()),
        "C^T T_I = e1": float(np.abs(model.C @ dec.T_I - e1).max()),
        "T A T_I = A0 + psi_a e1^T": float(
            np.abs(dec.T @ model.A @ dec.T_I - dec.A0 - np.outer(dec.psi_a, e1)).max()
        ),
        "psi_b = T B": float(np.abs(dec.psi_b - dec.T @ model.B).max()),
        "psi_d = T D": float(np.abs(dec.psi_d - dec.T @ model.D).max()),
    }


# -- closed forms for the 3rd-order benchmark ---------------------------------

# positions of (psi_a2, psi_b1, psi_b3) inside eta = (psi_a; psi_b)
AB_INDEX = (1, 3, 5)


def benchmark_psi(theta) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    t1, t2, t3 = np.asarray(theta, dtype=float)
    psi_a = np.array([0.0, -t2 * (t1 + t2 + t3), 0.0])
    psi_b = np.array([t3, 0.0, t2 * t3 * (t1 + t2)])
    psi_d = np.array([0.0, 0.0, t1 * t2 ** 2 * t3])
    return psi_a, psi_b, psi_d


def benchmark_T_I(theta) -> np.ndarray:
    t1, t2, t3 = np.asarray(theta, dtype=float)
    return np.array([
        [-(t1 + t2) / t3, 0.0, 1.0 / (t2 * t3)],
        [0.0, -1.0 / t3, 0.0],
        [1.0, 0.0, 0.0],
    ])


def benchmark_eta(theta) -> np.ndarray:
    psi_a, psi_b, _ = benchmark_psi(theta)
    return np.concatenate([psi_a, psi_b])


def benchmark_kappa(theta) -> np.ndarray:
    return np.concatenate(benchmark_psi(theta))


def selector_ab() -> np.ndarray:
    L = np.zeros((3, 6))
    for row, col in enumerate(AB_INDEX):
        L[row, col] = 1.0
    return L


def selector_a() -> np.ndarray:
    """Embed ``psi_ab`` into the nonzero slot of ``psi_a``."""
    L = np.zeros((3, 3))
    L[1, 0] = 1.0
    return L


def selector_b() -> np.ndarray:
    L = np.zeros((3, 3))
    L[0, 1] = 1.0
    L[2, 2] = 1.0
    return L


def benchmark_psi_ab(theta) -> np.ndarray:
    return selector_ab() @ benchmark_eta(theta)


def benchmark_psi_ab_jacobian(theta) -> np.ndarray:
    t1, t2, t3 = np.asarray(theta, dtype=float)
    return np.array([
        [-t2, -(t1 + 2 * t2 + t3), -t2],
        [0.0, 0.0, 1.0],
        [t2 * t3, t3 * (t1 + 2 * t2), t2 * (t1 + t2)],
    ])


def identifiability_check(theta, step: float = 1e-6) -> float:
    """``det(d psi_ab / d theta)^2`` by central differences."""
    theta = np.asarray(theta, dtype=float)
    J = np.empty((3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = step
        J[:, j] = (benchmark_psi_ab(theta + e) - benchmark_psi_ab(theta - e)) / (2 * step)
    return float(np.linalg.det(J) ** 2)


def benchmark_decomposition(theta) -> CanonicalDecomposition:
    return decompose(benchmark_model(theta))
