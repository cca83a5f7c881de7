"""Gradient adaptation laws and algebraic state/disturbance reconstruction."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .drem import RegressionPair
from .mathkit import IntegrationDivergedError, OdeSystem, rk4_step


class AdaptationDivergedError(FloatingPointError):
    pass


@dataclass(frozen=True)
class Gains:
    gamma_kappa: float = 50.0
    gamma_xdelta0: float = 50.0
    gamma_TI: float = 50.0

    def __post_init__(self):
        for name in ("gamma_kappa", "gamma_xdelta0", "gamma_TI"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class EstimateSet:
    kappa_hat: np.ndarray
    T_I_hat: np.ndarray
    x_delta0_hat: np.ndarray
    U_hat: np.ndarray
    x_hat: np.ndarray | None = None
    delta_hat: float = 0.0

    @classmethod
    def zeros(cls, n: int, nd: int) -> "EstimateSet":
        return cls(np.zeros(3 * n), np.zeros((n, n)), np.zeros(nd), np.zeros((n, n)), np.zeros(n), 0.0)

    @property
    def n(self) -> int:
        return self.T_I_hat.shape[0]


@njit(cache=True)
def gradient_nb(est, Y, M, gamma):
    """``-gamma M (M est - Y)`` with scalar or per-component ``M``."""
    return -gamma * M * (M * est - Y)


def adapt_step(est: EstimateSet, kappa: RegressionPair, T_I: RegressionPair, x_delta0: RegressionPair,
               gains: Gains, h: float) -> EstimateSet:
    """One RK4 step of the three gradient flows with the pairs frozen."""
    n = est.n
    nd = est.x_delta0_hat.size
    Mk = np.broadcast_to(np.asarray(kappa.M, dtype=float), (3 * n,)).copy()
    Yk = np.asarray(kappa.Y, dtype=float)
    Yt = np.asarray(T_I.Y, dtype=float).ravel()
    Yx = np.asarray(x_delta0.Y, dtype=float)
    Mt, Mx = float(T_I.M), float(x_delta0.M)

    def rhs(t, s):
        d = np.empty_like(s)
        d[:3 * n] = gradient_nb(s[:3 * n], Yk, Mk, gains.gamma_kappa)
        d[3 * n:3 * n + n * n] = gradient_nb(s[3 * n:3 * n + n * n], Yt, Mt, gains.gamma_TI)
        d[3 * n + n * n:] = gradient_nb(s[3 * n + n * n:], Yx, Mx, gains.gamma_xdelta0)
        return d

    s0 = np.concatenate([est.kappa_hat, est.T_I_hat.ravel(), est.x_delta0_hat])
    try:
        s1 = rk4_step(OdeSystem(s0.size, rhs), 0.0, s0, h)
    except IntegrationDivergedError as exc:
        raise AdaptationDivergedError(
            f"adaptation diverged ({exc}); gains={gains}, |M_kappa|max={np.abs(Mk).max():.3g}, "
            f"|M_T_I|={abs(Mt):.3g}, |M_x_delta0|={abs(Mx):.3g}"
        ) from exc
    return replace(
        est,
        kappa_hat=s1[:3 * n],
        T_I_hat=s1[3 * n:3 * n + n * n].reshape(n, n),
        x_delta0_hat=s1[3 * n + n * n:],
    )


@njit(cache=True)
def reconstruct_nb(kappa_hat, T_I_hat, U_hat, z, Om, P):
    n = z.shape[0]
    xi = z + Om @ kappa_hat[:n] + P @ kappa_hat[n:2 * n] + U_hat @ kappa_hat[2 * n:]
    return T_I_hat @ xi


def assemble(est: EstimateSet, z, Omega, P, Phi_delta, h_delta) -> EstimateSet:
    """Fill in ``x_hat`` and ``delta_hat`` from the current estimates.

    Both are algebraic in the filter states; there is no output-injection
    term, so the reconstruction inherits no corrective-feedback transient.
    """
    x_hat = reconstruct_nb(
        np.asarray(est.kappa_hat, dtype=float), np.ascontiguousarray(est.T_I_hat, dtype=float),
        np.ascontiguousarray(est.U_hat, dtype=float), np.asarray(z, dtype=float),
        np.ascontiguousarray(Omega, dtype=float), np.ascontiguousarray(P, dtype=float),
    )
    delta_hat = float(np.asarray(h_delta) @ np.asarray(Phi_delta) @ est.x_delta0_hat)
    return replace(est, x_hat=x_hat, delta_hat=delta_hat)


def step_U_hat(est: EstimateSet, A_K, Phi_delta, h_delta, h: float) -> EstimateSet:
    """Advance ``U_hat' = A_K U_hat + I delta_hat`` with ``delta_hat`` held."""
    n = est.n
    A_K = np.asarray(A_K, dtype=float)
    d_hat = float(np.asarray(h_delta) @ np.asarray(Phi_delta) @ est.x_delta0_hat)

    def rhs(t, s):
        return (A_K @ s.reshape(n, n) + d_hat * np.eye(n)).ravel()

    U = rk4_step(OdeSystem(n * n, rhs), 0.0, est.U_hat.ravel(), h).reshape(n, n)
    return replace(est, U_hat=U)


ERROR_NAMES = ("x_err", "delta_err", "kappa_err", "xdelta0_err", "T_I_err", "U_err")


def metrics(est: EstimateSet, x, delta: float, kappa, x_delta0, T_I, U_true) -> dict[str, float]:
    """Norms of the six observation/parametric errors against truth."""
    x_hat = est.x_hat if est.x_hat is not None else np.zeros_like(x)
    return {
        "x_err": float(np.linalg.norm(x_hat - x)),
        "delta_err": float(abs(est.delta_hat - delta)),
        "kappa_err": float(np.linalg.norm(est.kappa_hat - kappa)),
        "xdelta0_err": float(np.linalg.norm(est.x_delta0_hat - x_delta0)),
        "T_I_err": float(np.linalg.norm(est.T_I_hat - T_I)),
        "U_err": float(np.linalg.norm(est.U_hat - U_true)),
    }
