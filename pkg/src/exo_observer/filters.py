"""Measurement filters and the weighted extension integrals.

The bank turns ``(y, u)`` into a linear regression ``q = phi eta`` for the
canonical parameters, plus the disturbance-channel integrals ``V_f`` and
``p_f`` with ``p_f = V_f x_delta0``. All states are packed into one flat
vector; :func:`bank_offsets` gives the layout.
"""
from __future__ import annotations

from collections import namedtuple
from dataclasses import dataclass, fields

import numpy as np
from numba import njit

from .canonical import first_unit, shift_matrix
from .mathkit import IntegrationDivergedError, OdeSystem, SingularMatrixError, rk4_step, solve_sylvester
from .plant import ExoModel


class DesignError(ValueError):
    pass


class PhaseError(RuntimeError):
    pass


FilterParams = namedtuple("FilterParams", "AK K C0 G l beta k1 sigma t_eps")


@dataclass(frozen=True)
class FilterDesign:
    K: np.ndarray
    G: np.ndarray
    l: np.ndarray
    beta: np.ndarray
    k1: float = 25.0
    sigma: float = 1.0
    k_gain: float = 1e19
    t_eps: float = 25.0

    @property
    def n(self) -> int:
        return self.K.shape[0]

    @property
    def n_delta(self) -> int:
        return self.G.shape[0]

    @property
    def A0(self) -> np.ndarray:
        return shift_matrix(self.n)

    @property
    def C0(self) -> np.ndarray:
        return first_unit(self.n)

    @property
    def A_K(self) -> np.ndarray:
        return self.A0 - np.outer(self.K, self.C0)

    @classmethod
    def build(cls, K, G, l, exo: ExoModel, **kw) -> "FilterDesign":
        """Check the design conditions and compute ``beta`` from the exosystem."""
        K = np.asarray(K, dtype=float)
        G = np.asarray(G, dtype=float)
        l = np.asarray(l, dtype=float)
        A_K = shift_matrix(K.size) - np.outer(K, first_unit(K.size))
        if np.linalg.eigvals(A_K).real.max() >= 0:
            raise DesignError("A_K = A0 - K C0^T is not Hurwitz")
        if np.linalg.eigvals(G).real.max() >= 0:
            raise DesignError("G is not Hurwitz")
        ctrb = np.column_stack([np.linalg.matrix_power(G, i) @ l for i in range(G.shape[0])])
        if np.linalg.matrix_rank(ctrb) < G.shape[0]:
            raise DesignError("(G, l) is not controllable")
        beta = design_beta(exo, G, l)
        return cls(K=K, G=G, l=l, beta=beta, **kw)

    def params(self) -> FilterParams:
        return FilterParams(
            np.ascontiguousarray(self.A_K), np.asarray(self.K, dtype=float), self.C0,
            np.ascontiguousarray(self.G, dtype=float), np.asarray(self.l, dtype=float),
            np.asarray(self.beta, dtype=float), float(self.k1), float(self.sigma), float(self.t_eps),
        )


def sylvester_gain(exo: ExoModel, G, l) -> np.ndarray:
    """``M_delta`` solving ``M A_delta - G M = l (h_delta^T A_delta)``."""
    A_d = np.asarray(exo.A_delta, dtype=float)
    hbar = np.asarray(exo.h_delta, dtype=float) @ A_d
    return solve_sylvester(A_d, G, np.outer(l, hbar))


def design_beta(exo: ExoModel, G, l) -> np.ndarray:
    """Internal-model gain ``beta = hbar^T M_delta^{-1}``.

    With this ``beta`` the closed loop ``G + l beta^T`` reproduces the
    exosystem spectrum, so any exosystem-generated scalar ``w`` driving
    ``X' = G X + l w`` is recovered as ``w = beta^T X`` after transients.
    """
    M = sylvester_gain(exo, G, l)
    hbar = np.asarray(exo.h_delta, dtype=float) @ np.asarray(exo.A_delta, dtype=float)
    try:
        return np.linalg.solve(M.T, hbar)
    except np.linalg.LinAlgError as exc:
        raise DesignError("M_delta is singular; check (G, l) and the exosystem") from exc


# -- layout ----------------------------------------------------------------------

BANK_FIELDS = (
    # name, shape as a function of (n, nd)
    ("z", lambda n, nd: (n,)),
    ("Omega", lambda n, nd: (n, n)),
    ("P", lambda n, nd: (n, n)),
    ("U_true", lambda n, nd: (n, n)),
    ("F", lambda n, nd: (nd,)),
    ("H", lambda n, nd: (nd, n)),
    ("N", lambda n, nd: (nd, n)),
    ("qbar_f", lambda n, nd: ()),
    ("phibar_f", lambda n, nd: (2 * n,)),
    ("F_f", lambda n, nd: (nd,)),
    ("y_f", lambda n, nd: ()),
    ("V", lambda n, nd: (n, n * nd)),
    # extension integrals, zero until t_eps
    ("q", lambda n, nd: (2 * n,)),
    ("phi", lambda n, nd: (2 * n, 2 * n)),
    ("p_f", lambda n, nd: (nd,)),
    ("V_f", lambda n, nd: (nd, nd)),
)


@njit(cache=True)
def bank_offsets(n, nd):
    """Start offsets of every bank field plus the total length (last entry)."""
    sizes = (n, n * n, n * n, n * n, nd, nd * n, nd * n, 1, 2 * n, nd, 1, n * n * nd,
             2 * n, 4 * n * n, nd, nd * nd)
    out = np.zeros(len(sizes) + 1, dtype=np.int64)
    for i in range(len(sizes)):
        out[i + 1] = out[i] + sizes[i]
    return out


EXT_START = 12  # index of "q" in BANK_FIELDS


@dataclass
class FilterBankState:
    z: np.ndarray
    Omega: np.ndarray
    P: np.ndarray
    U_true: np.ndarray
    F: np.ndarray
    H: np.ndarray
    N: np.ndarray
    qbar_f: float
    phibar_f: np.ndarray
    F_f: np.ndarray
    y_f: float
    V: np.ndarray
    q: np.ndarray
    phi: np.ndarray
    p_f: np.ndarray
    V_f: np.ndarray
    t: float = 0.0

    @classmethod
    def zeros(cls, n: int, nd: int, t0: float = 0.0) -> "FilterBankState":
        kw = {name: (np.zeros(shape(n, nd)) if shape(n, nd) else 0.0) for name, shape in BANK_FIELDS}
        return cls(t=t0, **kw)

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def n_delta(self) -> int:
        return self.F.shape[0]

    def pack(self) -> np.ndarray:
        return np.concatenate([np.ravel(getattr(self, name)) for name, _ in BANK_FIELDS])

    @classmethod
    def unpack(cls, vec: np.ndarray, n: int, nd: int, t: float) -> "FilterBankState":
        off = bank_offsets(n, nd)
        kw = {}
        for i, (name, shape) in enumerate(BANK_FIELDS):
            chunk = vec[off[i]:off[i + 1]]
            shp = shape(n, nd)
            kw[name] = float(chunk[0]) if shp == () else chunk.reshape(shp).copy()
        return cls(t=t, **kw)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


# -- kernels -----------------------------------------------------------------------


@njit(cache=True)
def phibar_qbar_nb(b, y, u, fp, n, nd):
    """Instantaneous regressor and regressand from the bank vector ``b``."""
    off = bank_offsets(n, nd)
    z = b[off[0]:off[1]]
    Om = b[off[1]:off[2]].reshape(n, n)
    P = b[off[2]:off[3]].reshape(n, n)
    H = b[off[5]:off[6]].reshape(nd, n)
    N = b[off[6]:off[7]].reshape(nd, n)
    # C0 = e1, so C0^T M is the first row of M
    Omd_row = fp.AK[0, :] @ Om
    Omd_row[0] += y
    Pd_row = fp.AK[0, :] @ P
    Pd_row[0] += u
    phibar = np.empty(2 * n)
    phibar[:n] = Omd_row + fp.beta @ N
    phibar[n:] = Pd_row + fp.beta @ H
    qbar = y - z[0]
    return phibar, qbar


@njit(cache=True)
def bank_rhs_nb(b, db, y, u, delta, truth, hdPhi, fp, n, nd):
    """Derivatives of every non-extension bank state; writes into ``db``."""
    off = bank_offsets(n, nd)
    AK = fp.AK
    z = b[off[0]:off[1]]
    Om = b[off[1]:off[2]].reshape(n, n)
    P = b[off[2]:off[3]].reshape(n, n)
    U = b[off[3]:off[4]].reshape(n, n)
    F = b[off[4]:off[5]]
    H = b[off[5]:off[6]].reshape(nd, n)
    N = b[off[6]:off[7]].reshape(nd, n)
    qf = b[off[7]]
    phf = b[off[8]:off[9]]
    Ff = b[off[9]:off[10]]
    yf = b[off[10]]
    V = b[off[11]:off[12]].reshape(n, n * nd)

    zd = AK @ z + fp.K * y
    Omd = AK @ Om
    Pd = AK @ P
    for i in range(n):
        Omd[i, i] += y
        Pd[i, i] += u
    db[off[0]:off[1]] = zd
    db[off[1]:off[2]] = Omd.ravel()
    db[off[2]:off[3]] = Pd.ravel()
    if truth:
        Ud = AK @ U
        for i in range(n):
            Ud[i, i] += delta
        db[off[3]:off[4]] = Ud.ravel()
    else:
        db[off[3]:off[4]] = 0.0

    Gl = fp.G @ fp.l
    db[off[4]:off[5]] = fp.G @ F + Gl * y - fp.l * zd[0]
    db[off[5]:off[6]] = (fp.G @ H - np.outer(fp.l, Pd[0, :])).ravel()
    db[off[6]:off[7]] = (fp.G @ N - np.outer(fp.l, Omd[0, :])).ravel()

    phibar = np.empty(2 * n)
    phibar[:n] = Omd[0, :] + fp.beta @ N
    phibar[n:] = Pd[0, :] + fp.beta @ H
    qbar = y - z[0]
    db[off[7]] = -fp.k1 * qf + qbar
    db[off[8]:off[9]] = -fp.k1 * phf + phibar
    db[off[9]:off[10]] = -fp.k1 * Ff + F
    db[off[10]] = -fp.k1 * yf + y

    Vd = AK @ V
    for j in range(nd):
        for i in range(n):
            Vd[i, j * n + i] += hdPhi[j]
    db[off[11]:off[12]] = Vd.ravel()
    return qbar


@njit(cache=True)
def extension_rhs_nb(b, db, t, qbar, Y, Delta, Y_psi_d, M_psi_d, fp, n, nd):
    """Derivatives of ``q, phi, p_f, V_f`` with weight ``exp(-sigma (t - t_eps))``.

    ``(Y, Delta)`` is the mixed pair for eta and ``(Y_psi_d, M_psi_d)`` the
    pair for psi_d; they enter only the disturbance-channel integrals.
    """
    off = bank_offsets(n, nd)
    Om = b[off[1]:off[2]].reshape(n, n)
    P = b[off[2]:off[3]].reshape(n, n)
    qf = b[off[7]]
    phf = b[off[8]:off[9]]
    Ff = b[off[9]:off[10]]
    yf = b[off[10]]
    V = b[off[11]:off[12]].reshape(n, n * nd)

    w = np.exp(-fp.sigma * (t - fp.t_eps))
    target = qbar - fp.k1 * qf - fp.beta @ (Ff + fp.l * yf)
    db[off[12]:off[13]] = (w * target) * phf
    db[off[13]:off[14]] = (w * np.outer(phf, phf)).ravel()

    p = Delta * qbar - Om[0, :] @ Y[:n] - P[0, :] @ Y[n:]
    rho = np.empty(nd)
    for j in range(nd):
        rho[j] = Delta * (V[0, j * n:(j + 1) * n] @ Y_psi_d)
    db[off[14]:off[15]] = (w * M_psi_d * p) * rho
    db[off[15]:off[16]] = (w * np.outer(rho, rho)).ravel()


# -- numpy-level API ------------------------------------------------------------


def phibar_and_qbar(state: FilterBankState, design: FilterDesign, y: float, u: float = 0.0):
    """Return ``(phibar, qbar)``; derivatives of Omega and P come from their RHS."""
    phibar, qbar = phibar_qbar_nb(state.pack(), float(y), float(u), design.params(), state.n, state.n_delta)
    return phibar, float(qbar)


def step_bank(state: FilterBankState, design: FilterDesign, y: float, u: float, delta_source: float,
              Phi_delta, h_delta, h: float, truth: bool = False) -> FilterBankState:
    """One RK4 step of the measurement filters with inputs held over the step.

    ``delta_source`` drives the diagnostic ``U_true`` only when ``truth``
    is set; the observer path never needs it.
    """
    n, nd = state.n, state.n_delta
    fp = design.params()
    off = bank_offsets(n, nd)
    ext = off[EXT_START]
    hdPhi = np.asarray(h_delta, dtype=float) @ np.asarray(Phi_delta, dtype=float)

    def rhs(t, vec):
        full = np.zeros(off[-1])
        full[:ext] = vec
        d = np.zeros(off[-1])
        bank_rhs_nb(full, d, float(y), float(u), float(delta_source), truth, hdPhi, fp, n, nd)
        return d[:ext]

    vec = state.pack()
    try:
        new = rk4_step(OdeSystem(ext, rhs), state.t, vec[:ext], h)
    except IntegrationDivergedError as exc:
        exc.label = BANK_FIELDS[int(np.searchsorted(off, exc.component, side="right")) - 1][0]
        raise
    vec[:ext] = new
    return FilterBankState.unpack(vec, n, nd, state.t + h)


def step_extension(state: FilterBankState, design: FilterDesign, t: float, h: float, y: float,
                   cascade=None) -> FilterBankState:
    """Advance ``q, phi, p_f, V_f`` over one step with the bank frozen.

    ``cascade(phi, q) -> (Y, Delta, Y_psi_d, M_psi_d)`` supplies the pairs
    needed by the disturbance-channel integrals; without it those two
    integrals see zero pairs and stay put.
    """
    if t < design.t_eps:
        raise PhaseError(f"extension integrals start at t_eps={design.t_eps}, got t={t}")
    n, nd = state.n, state.n_delta
    fp = design.params()
    off = bank_offsets(n, nd)
    ext = off[EXT_START]
    base = state.pack()
    qbar = float(y) - state.z[0]

    def rhs(tt, vec):
        full = base.copy()
        full[ext:] = vec
        phi = full[off[13]:off[14]].reshape(2 * n, 2 * n)
        q = full[off[12]:off[13]]
        if cascade is None:
            Y, Delta, Ypd, Mpd = np.zeros(2 * n), 0.0, np.zeros(n), 0.0
        else:
            Y, Delta, Ypd, Mpd = cascade(phi, q)
        d = np.zeros(off[-1])
        extension_rhs_nb(full, d, tt, qbar, np.asarray(Y, dtype=float), float(Delta),
                         np.asarray(Ypd, dtype=float), float(Mpd), fp, n, nd)
        return d[ext:]

    new = rk4_step(OdeSystem(off[-1] - ext, rhs), t, base[ext:], h)
    base[ext:] = new
    return FilterBankState.unpack(base, n, nd, t + h)
