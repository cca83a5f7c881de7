"""Small dense linear algebra and fixed-step integration.

Everything here works on plain numpy arrays. The ``*_nb`` kernels are
numba-compiled twins used inside the simulation loop, where calling back
into numpy for 6x6 determinants would dominate the run time.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numba import njit

SINGULAR_TOL = 1e-12


class IntegrationDivergedError(FloatingPointError):
    """Raised when an integration step produces a non-finite value."""

    def __init__(self, component: int, t: float, label: str | None = None):
        self.component = component
        self.t = t
        self.label = label
        name = label if label is not None else f"component {component}"
        super().__init__(f"integration diverged at t={t:.6g}: {name} is not finite")


class SingularMatrixError(np.linalg.LinAlgError):
    pass


class SpectraOverlapError(np.linalg.LinAlgError):
    pass


class NotSymmetricError(ValueError):
    pass


@dataclass(frozen=True)
class OdeSystem:
    """Autonomous or time-varying ODE ``dx/dt = rhs(t, x)``."""

    dimension: int
    rhs: Callable[[float, np.ndarray], np.ndarray]


def rk4_step(sys: OdeSystem, t: float, x: np.ndarray, h: float) -> np.ndarray:
    """Advance ``x`` by one classical Runge-Kutta step of size ``h``.

    Raises
    ------
    IntegrationDivergedError
        If any stage or the result contains a non-finite entry.
    """
    if not h > 0:
        raise ValueError(f"step must be positive, got {h}")
    x = np.asarray(x, dtype=float)
    if x.shape != (sys.dimension,):
        raise ValueError(f"state has shape {x.shape}, expected ({sys.dimension},)")
    _check_finite(x, t)

    k1 = np.asarray(sys.rhs(t, x), dtype=float)
    k2 = np.asarray(sys.rhs(t + 0.5 * h, x + 0.5 * h * k1), dtype=float)
    k3 = np.asarray(sys.rhs(t + 0.5 * h, x + 0.5 * h * k2), dtype=float)
    k4 = np.asarray(sys.rhs(t + h, x + h * k3), dtype=float)
    for k in (k1, k2, k3, k4):
        _check_finite(k, t)
    out = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    _check_finite(out, t + h)
    return out


def rk4_integrate(sys: OdeSystem, t0: float, x0: np.ndarray, h: float, n_steps: int) -> np.ndarray:
    """Apply :func:`rk4_step` ``n_steps`` times and return the final state."""
    x = np.asarray(x0, dtype=float)
    for i in range(n_steps):
        x = rk4_step(sys, t0 + i * h, x, h)
    return x


def _check_finite(v: np.ndarray, t: float) -> None:
    bad = np.flatnonzero(~np.isfinite(v))
    if bad.size:
        raise IntegrationDivergedError(int(bad[0]), t)


def _square(M) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    return M


def det(M) -> float:
    M = _square(M)
    n = M.shape[0]
    if n <= 3:
        return float(_cofactor_det(M))
    return float(np.linalg.det(M))


def _cofactor_det(M: np.ndarray) -> float:
    n = M.shape[0]
    if n == 1:
        return M[0, 0]
    if n == 2:
        return M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    total = 0.0
    for j in range(n):
        minor = np.delete(M[1:], j, axis=1)
        total += (-1) ** j * M[0, j] * _cofactor_det(minor)
    return total


def adjugate(M) -> np.ndarray:
    """Classical adjoint, so that ``adjugate(M) @ M == det(M) * I`` for any M.

    Cofactor expansion up to 4x4. Larger matrices use ``det * inv`` when
    they are safely invertible and fall back to cofactors otherwise.
    """
    M = _square(M)
    n = M.shape[0]
    if n == 1:
        return np.ones((1, 1))
    if n > 4:
        d = np.linalg.det(M)
        if abs(d) > SINGULAR_TOL * max(np.linalg.norm(M), 1e-300) ** n:
            return d * np.linalg.inv(M)
    cof = np.empty_like(M)
    for i in range(n):
        for j in range(n):
            minor = np.delete(np.delete(M, i, axis=0), j, axis=1)
            cof[i, j] = (-1) ** (i + j) * det(minor)
    return cof.T


def inverse(M) -> np.ndarray:
    M = _square(M)
    n = M.shape[0]
    d = det(M)
    scale = np.linalg.norm(M) ** n
    if scale == 0.0 or abs(d) < SINGULAR_TOL * scale:
        raise SingularMatrixError(f"matrix is singular (det={d:.3g})")
    return adjugate(M) / d


def solve_sylvester(A, G, Q) -> np.ndarray:
    """Solve ``M A - G M = Q`` for ``M`` through the Kronecker form.

    With column-major vectorization the equation reads
    ``(A^T kron I - I kron G) vec(M) = vec(Q)``, which is nonsingular exactly
    when A and G share no eigenvalue.
    """
    A = _square(A)
    G = _square(G)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    m, n = G.shape[0], A.shape[0]
    if Q.shape != (m, n):
        raise ValueError(f"Q has shape {Q.shape}, expected {(m, n)}")
    L = np.kron(A.T, np.eye(m)) - np.kron(np.eye(n), G)
    s = np.linalg.svd(L, compute_uv=False)
    if s[-1] <= SINGULAR_TOL * max(s[0], 1.0):
        raise SpectraOverlapError("spectra of A and G overlap; Sylvester equation is singular")
    vecM = np.linalg.solve(L, Q.reshape(-1, order="F"))
    return vecM.reshape((m, n), order="F")


def min_eig_sym(M) -> float:
    M = _square(M)
    scale = max(np.abs(M).max(), 1e-300)
    if np.abs(M - M.T).max() > 1e-9 * scale:
        raise NotSymmetricError("matrix is not symmetric")
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])


# -- numba kernels ---------------------------------------------------------


@njit(cache=True)
def det_nb(M):
    """Determinant by partial-pivot LU; exact zero for a zero pivot column."""
    n = M.shape[0]
    a = M.copy()
    d = 1.0
    for k in range(n):
        p = k
        best = abs(a[k, k])
        for i in range(k + 1, n):
            if abs(a[i, k]) > best:
                best = abs(a[i, k])
                p = i
        if best == 0.0:
            return 0.0
        if p != k:
            for j in range(n):
                tmp = a[k, j]
                a[k, j] = a[p, j]
                a[p, j] = tmp
            d = -d
        piv = a[k, k]
        d *= piv
        for i in range(k + 1, n):
            f = a[i, k] / piv
            if f != 0.0:
                for j in range(k + 1, n):
                    a[i, j] -= f * a[k, j]
    return d


@njit(cache=True)
def adj_dot_nb(M, v):
    """Return ``adj(M) @ v`` by Cramer's rule; valid for singular M."""
    n = M.shape[0]
    out = np.empty(n)
    work = np.empty((n, n))
    for i in range(n):
        for r in range(n):
            for c in range(n):
                work[r, c] = M[r, c]
            work[r, i] = v[r]
        out[i] = det_nb(work)
    return out
