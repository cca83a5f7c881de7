"""Measurable regressions for theta, psi_d, T_I, kappa and x_delta0.

Each map consumes a pair ``(Y, M)`` with ``Y = M * unknown`` and produces a
new pair for a different unknown, using only products and adjugates so no
estimated quantity is ever inverted. The closed forms below are for the
third-order benchmark plant, where

    psi_ab = (-t2 (t1 + t2 + t3),  t3,  t2 t3 (t1 + t2))
    psi_d  = (0, 0, t1 t2^2 t3)
    T_I    = [[-(t1 + t2)/t3, 0, 1/(t2 t3)], [0, -1/t3, 0], [1, 0, 0]]

Two flavours are provided. ``printed=True`` keeps the full adjugate/det
compositions, whose multipliers grow like ``M_theta**12``. The default
reduced flavour cancels the scalar-identity factors first; both satisfy the
same contract.
"""
from __future__ import annotations

from collections import namedtuple

import numpy as np
from numba import njit

from .drem import RegressionPair, mix_nb, normalize_nb
from .mathkit import adj_dot_nb, det_nb

AB_INDEX = np.array([1, 3, 5])

CascadeOutput = namedtuple(
    "CascadeOutput",
    "Y Delta Y_theta M_theta Y_psi_d M_psi_d Y_T_I M_T_I Y_kappa M_kappa",
)


@njit(cache=True)
def theta_maps_nb(Y_ab, Delta):
    """Return ``(T_G, T_S)`` evaluated on measurable inputs."""
    m1, m2, m3 = Y_ab[0], Y_ab[1], Y_ab[2]
    s = m1 * m2 + Delta * m3
    T_G = np.zeros((3, 3))
    T_G[0, 0] = -m2 * m2 * s
    T_G[1, 1] = m2 * m2
    T_G[2, 2] = Delta
    T_S = np.empty(3)
    T_S[0] = m2 ** 3 * m3 - s * s
    T_S[1] = -s
    T_S[2] = m2
    return T_G, T_S


@njit(cache=True)
def theta_regression_nb(Y_ab, Delta):
    T_G, T_S = theta_maps_nb(Y_ab, Delta)
    return adj_dot_nb(T_G, T_S), det_nb(T_G)


@njit(cache=True)
def psi_d_regression_nb(Y_theta, M_theta, printed):
    n1, n2, n3 = Y_theta[0], Y_theta[1], Y_theta[2]
    W = np.zeros(3)
    W[2] = n1 * n2 * n2 * n3
    M4 = M_theta ** 4
    if printed:
        # adj(M^4 I) W, det(M^4 I)
        return M4 * M4 * W, M4 ** 3
    return W, M4


@njit(cache=True)
def t_i_regression_nb(Y_theta, M_theta, printed):
    n1, n2, n3 = Y_theta[0], Y_theta[1], Y_theta[2]
    Q = np.zeros((3, 3))
    Q[0, 0] = -(n1 * n2 * n3 + n2 * n2 * n3)
    Q[0, 2] = M_theta * M_theta * n3
    Q[1, 1] = -M_theta * n2 * n3
    Q[2, 0] = n2 * n3 * n3
    p = n2 * n3 * n3
    if printed:
        # T_P = p I: adj = p^2 I, det = p^3
        return p * p * Q, p ** 3
    return Q, p


@njit(cache=True)
def kappa_regression_nb(Y, Delta, Y_psi_d, M_psi_d, printed):
    """Stacked pair for ``kappa = (psi_a; psi_b; psi_d)``.

    Always returns a per-component multiplier vector. In printed form all
    entries equal ``det(blkdiag(Delta I_2n, M_psi_d I_n))``.
    """
    n2 = Y.shape[0]
    n = Y_psi_d.shape[0]
    Yk = np.empty(n2 + n)
    Mk = np.empty(n2 + n)
    if printed:
        M = Delta ** n2 * M_psi_d ** n
        a = Delta ** (n2 - 1) * M_psi_d ** n
        b = Delta ** n2 * M_psi_d ** (n - 1)
        for i in range(n2):
            Yk[i] = a * Y[i]
            Mk[i] = M
        for i in range(n):
            Yk[n2 + i] = b * Y_psi_d[i]
            Mk[n2 + i] = M
    else:
        for i in range(n2):
            Yk[i] = Y[i]
            Mk[i] = Delta
        for i in range(n):
            Yk[n2 + i] = Y_psi_d[i]
            Mk[n2 + i] = M_psi_d
    return Yk, Mk


@njit(cache=True)
def xdelta0_regression_nb(V_f, p_f):
    return adj_dot_nb(V_f, p_f), det_nb(V_f)


@njit(cache=True)
def cascade_nb(phi, q, k, normalized, floor, printed):
    """Run mixing and every map from ``(phi, q)`` down to the kappa pair.

    When ``normalized`` is set each intermediate pair is divided by
    ``floor + |M|`` before it is fed forward.
    """
    Y, Delta = mix_nb(phi, q, k)
    if normalized:
        Y, Delta = normalize_nb(Y, Delta, floor)
    Y_ab = np.empty(3)
    for i in range(3):
        Y_ab[i] = Y[AB_INDEX[i]]
    Y_th, M_th = theta_regression_nb(Y_ab, Delta)
    if normalized:
        Y_th, M_th = normalize_nb(Y_th, M_th, floor)
    Y_pd, M_pd = psi_d_regression_nb(Y_th, M_th, printed)
    if normalized:
        Y_pd, M_pd = normalize_nb(Y_pd, M_pd, floor)
    Y_ti, M_ti = t_i_regression_nb(Y_th, M_th, printed)
    if normalized:
        Y_ti, M_ti = normalize_nb(Y_ti, M_ti, floor)
    Y_k, M_k = kappa_regression_nb(Y, Delta, Y_pd, M_pd, printed)
    return Y, Delta, Y_th, M_th, Y_pd, M_pd, Y_ti, M_ti, Y_k, M_k


# -- numpy-level API ------------------------------------------------------------


def theta_regression(Y_ab, Delta: float) -> RegressionPair:
    Y, M = theta_regression_nb(np.asarray(Y_ab, dtype=float), float(Delta))
    return RegressionPair(Y, float(M), "theta")


def psi_d_regression(Y_theta, M_theta: float, printed: bool = False) -> RegressionPair:
    Y, M = psi_d_regression_nb(np.asarray(Y_theta, dtype=float), float(M_theta), printed)
    return RegressionPair(Y, float(M), "psi_d")


def t_i_regression(Y_theta, M_theta: float, printed: bool = False) -> RegressionPair:
    Y, M = t_i_regression_nb(np.asarray(Y_theta, dtype=float), float(M_theta), printed)
    return RegressionPair(Y, float(M), "T_I")


def kappa_regression(Y, Delta: float, Y_psi_d, M_psi_d: float, printed: bool = False) -> RegressionPair:
    """Pair for kappa.

    The reduced form returns one multiplier per component; the printed form
    returns the scalar determinant of the block-diagonal scaling.
    """
    Yk, Mk = kappa_regression_nb(
        np.asarray(Y, dtype=float), float(Delta), np.asarray(Y_psi_d, dtype=float), float(M_psi_d), printed
    )
    if printed:
        return RegressionPair(Yk, float(Mk[0]), "kappa")
    return RegressionPair(Yk, Mk, "kappa")


def xdelta0_regression(V_f, p_f) -> RegressionPair:
    Y, M = xdelta0_regression_nb(np.ascontiguousarray(V_f, dtype=float), np.asarray(p_f, dtype=float))
    return RegressionPair(Y, float(M), "x_delta0")


def cascade(phi, q, k: float = 1.0, normalized: bool = False, floor: float = 1.0,
            printed: bool = False) -> CascadeOutput:
    out = cascade_nb(
        np.ascontiguousarray(phi, dtype=float), np.asarray(q, dtype=float), float(k),
        normalized, float(floor), printed,
    )
    return CascadeOutput(*out)
