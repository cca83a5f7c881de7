"""Single-clock closed-loop simulation: plant, filters, cascade and observer.

Everything lives in one flat state vector advanced by a jitted RK4 loop:

    [ x | x_delta | Phi_delta | filter bank | kappa_hat | T_I_hat | x_delta0_hat | U_hat ]

Inputs (reference, control, pairs) are re-evaluated at every RK4 stage, so
the whole interconnection is integrated as one ODE. Post-processing of the
sampled trajectory (estimates, pairs, metrics) happens in numpy.
"""
from __future__ import annotations

import time
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .canonical import benchmark_decomposition
from .config import SimConfig
from .drem import normalize_nb
from .filters import EXT_START, FilterBankState, FilterDesign, bank_offsets, bank_rhs_nb, extension_rhs_nb
from .hetero import cascade_nb, xdelta0_regression_nb
from .mathkit import min_eig_sym
from .observer import ERROR_NAMES, gradient_nb
from .plant import ExoModel, SimulationDivergedError, benchmark_model, control_nb, plant_rhs_nb, reference_nb

EngineParams = namedtuple(
    "EngineParams",
    "A B D C Ad hd fp ref_offset ref_amp ref_omega ref_decay ctrl_gain k normalized floor printed "
    "g_kappa g_xdelta0 g_TI truth",
)


@njit(cache=True)
def layout(n, nd):
    """Offsets ``(bank, obs, kappa, T_I, x_delta0, U, total)`` into the state."""
    ob = n + nd + nd * nd
    oo = ob + bank_offsets(n, nd)[-1]
    ok = oo
    ot = ok + 3 * n
    ox = ot + n * n
    ou = ox + nd
    return ob, oo, ok, ot, ox, ou, ou + n * n


@njit(cache=True)
def engine_rhs_nb(t, s, ds, active, p, n, nd):
    ob, oo, ok, ot, ox, ou, tot = layout(n, nd)
    off = bank_offsets(n, nd)
    x = s[:n]
    xd = s[n:n + nd]
    Phi = s[n + nd:ob].reshape(nd, nd)
    y = p.C @ x
    delta = p.hd @ xd
    r = reference_nb(t, p.fp.t_eps, p.ref_offset, p.ref_amp, p.ref_omega, p.ref_decay)
    u = control_nb(r, y, p.ctrl_gain)
    plant_rhs_nb(x, xd, Phi, u, p.A, p.B, p.D, p.Ad, p.hd,
                 ds[:n], ds[n:n + nd], ds[n + nd:ob].reshape(nd, nd))

    b = s[ob:oo]
    db = ds[ob:oo]
    hdPhi = p.hd @ Phi
    qbar = bank_rhs_nb(b, db, y, u, delta, p.truth, hdPhi, p.fp, n, nd)

    kh = s[ok:ot]
    th = s[ot:ox]
    xh = s[ox:ou]
    Uh = s[ou:tot].reshape(n, n)
    if active:
        q = b[off[12]:off[13]]
        phi = b[off[13]:off[14]].reshape(2 * n, 2 * n)
        Y, Dl, Yth, Mth, Ypd, Mpd, Yti, Mti, Yk, Mk = cascade_nb(phi, q, p.k, p.normalized, p.floor, p.printed)
        extension_rhs_nb(b, db, t, qbar, Y, Dl, Ypd, Mpd, p.fp, n, nd)
        pf = b[off[14]:off[15]]
        Vf = b[off[15]:off[16]].reshape(nd, nd)
        Yx, Mx = xdelta0_regression_nb(Vf, pf)
        if p.normalized:
            Yx, Mx = normalize_nb(Yx, Mx, p.floor)
        ds[ok:ot] = gradient_nb(kh, Yk, Mk, p.g_kappa)
        ds[ot:ox] = gradient_nb(th, Yti.ravel(), Mti, p.g_TI)
        ds[ox:ou] = gradient_nb(xh, Yx, Mx, p.g_xdelta0)
    else:
        ds[ob + off[EXT_START]:oo] = 0.0
        ds[ok:ou] = 0.0
    d_hat = hdPhi @ xh
    dU = p.fp.AK @ Uh
    for i in range(n):
        dU[i, i] += d_hat
    ds[ou:tot] = dU.ravel()


@njit(cache=True, nogil=True)
def integrate_nb(s0, p, n, nd, t0, h, n_steps, i_eps, every):
    """Fixed-step RK4 from ``t0``; returns ``(samples, status, fail_step)``.

    Steps with index ``>= i_eps`` (i.e. starting at or after ``t_eps``)
    run with the extension integrals and adaptation switched on. ``status``
    is 0 on success, 1 if a non-finite value appeared.
    """
    dim = s0.shape[0]
    n_samples = n_steps // every + 1
    out = np.empty((n_samples, dim))
    s = s0.copy()
    out[0] = s
    k1 = np.empty(dim)
    k2 = np.empty(dim)
    k3 = np.empty(dim)
    k4 = np.empty(dim)
    tmp = np.empty(dim)
    j = 1
    for i in range(n_steps):
        t = t0 + i * h
        act = i >= i_eps
        engine_rhs_nb(t, s, k1, act, p, n, nd)
        for m in range(dim):
            tmp[m] = s[m] + 0.5 * h * k1[m]
        engine_rhs_nb(t + 0.5 * h, tmp, k2, act, p, n, nd)
        for m in range(dim):
            tmp[m] = s[m] + 0.5 * h * k2[m]
        engine_rhs_nb(t + 0.5 * h, tmp, k3, act, p, n, nd)
        for m in range(dim):
            tmp[m] = s[m] + h * k3[m]
        engine_rhs_nb(t + h, tmp, k4, act, p, n, nd)
        ok = True
        for m in range(dim):
            s[m] += h / 6.0 * (k1[m] + 2.0 * k2[m] + 2.0 * k3[m] + k4[m])
            if not np.isfinite(s[m]):
                ok = False
        if not ok:
            return out[:j], 1, i
        if (i + 1) % every == 0:
            out[j] = s
            j += 1
    return out[:j], 0, n_steps


@njit(cache=True)
def _pairs_at_nb(b, p, n, nd):
    off = bank_offsets(n, nd)
    q = b[off[12]:off[13]]
    phi = b[off[13]:off[14]].reshape(2 * n, 2 * n)
    res = cascade_nb(phi, q, p.k, p.normalized, p.floor, p.printed)
    pf = b[off[14]:off[15]]
    Vf = b[off[15]:off[16]].reshape(nd, nd)
    Yx, Mx = xdelta0_regression_nb(Vf, pf)
    if p.normalized:
        Yx, Mx = normalize_nb(Yx, Mx, p.floor)
    return res, Yx, Mx


# -- python orchestration --------------------------------------------------------


@dataclass(frozen=True)
class Setup:
    """Resolved models and jit parameters for one configuration."""

    config: SimConfig
    model: object
    exo: ExoModel
    design: FilterDesign
    params: EngineParams

    @property
    def n(self) -> int:
        return self.model.n

    @property
    def n_delta(self) -> int:
        return self.exo.n_delta


def build(cfg: SimConfig) -> Setup:
    model = benchmark_model(cfg.theta)
    exo = ExoModel(cfg.arr("A_delta"), cfg.arr("h_delta"), cfg.arr("x_delta0"))
    design = FilterDesign.build(cfg.K, cfg.G, cfg.l, exo, k1=cfg.k1, sigma=cfg.sigma,
                                k_gain=cfg.k_gain, t_eps=cfg.t_eps)
    g = cfg.active_gains
    paper = cfg.mode == "paper"
    params = EngineParams(
        np.ascontiguousarray(model.A), model.B.copy(), model.D.copy(), model.C.copy(),
        np.ascontiguousarray(exo.A_delta, dtype=float), np.asarray(exo.h_delta, dtype=float),
        design.params(), cfg.ref_offset, cfg.ref_amplitude, cfg.ref_omega, cfg.ref_decay,
        cfg.control_gain, cfg.k_gain, not paper, cfg.norm_floor, paper,
        g.gamma_kappa, g.gamma_xdelta0, g.gamma_TI, cfg.truth,
    )
    return Setup(cfg, model, exo, design, params)


def initial_state(setup: Setup) -> np.ndarray:
    cfg = setup.config
    n, nd = setup.n, setup.n_delta
    ob, oo, ok, ot, ox, ou, tot = layout(n, nd)
    s = np.zeros(tot)
    s[:n] = cfg.x0
    s[n:n + nd] = cfg.x_delta0
    s[n + nd:ob] = np.eye(nd).ravel()
    s[ok:ot] = cfg.kappa0
    s[ot:ox] = np.ravel(cfg.T_I0)
    s[ox:ou] = cfg.x_delta0_hat0
    return s


@dataclass
class RunResult:
    setup: Setup
    t: np.ndarray
    states: np.ndarray
    status: int
    fail_time: float | None
    wall_time: float
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def diverged(self) -> bool:
        return self.status != 0

    # -- raw slices -----------------------------------------------------------

    def _sl(self):
        n, nd = self.setup.n, self.setup.n_delta
        return n, nd, layout(n, nd), bank_offsets(n, nd)

    def bank(self, name: str) -> np.ndarray:
        """Sampled bank field, shape ``(samples, *field_shape)``."""
        from .filters import BANK_FIELDS

        n, nd, lay, off = self._sl()
        names = [f for f, _ in BANK_FIELDS]
        i = names.index(name)
        shape = dict(BANK_FIELDS)[name](n, nd)
        chunk = self.states[:, lay[0] + off[i]:lay[0] + off[i + 1]]
        return chunk.reshape((len(self.t),) + tuple(shape)) if shape else chunk[:, 0]

    def bank_state(self, i: int) -> FilterBankState:
        n, nd, lay, off = self._sl()
        return FilterBankState.unpack(self.states[i, lay[0]:lay[1]], n, nd, float(self.t[i]))

    @property
    def x(self) -> np.ndarray:
        return self.states[:, :self.setup.n]

    @property
    def x_delta(self) -> np.ndarray:
        n, nd = self.setup.n, self.setup.n_delta
        return self.states[:, n:n + nd]

    @property
    def Phi_delta(self) -> np.ndarray:
        n, nd = self.setup.n, self.setup.n_delta
        return self.states[:, n + nd:n + nd + nd * nd].reshape(-1, nd, nd)

    @property
    def delta(self) -> np.ndarray:
        return self.x_delta @ self.setup.exo.h_delta

    @property
    def y(self) -> np.ndarray:
        return self.x @ self.setup.model.C

    @property
    def kappa_hat(self) -> np.ndarray:
        n, nd, lay, _ = self._sl()
        return self.states[:, lay[2]:lay[3]]

    @property
    def T_I_hat(self) -> np.ndarray:
        n, nd, lay, _ = self._sl()
        return self.states[:, lay[3]:lay[4]].reshape(-1, n, n)

    @property
    def x_delta0_hat(self) -> np.ndarray:
        n, nd, lay, _ = self._sl()
        return self.states[:, lay[4]:lay[5]]

    @property
    def U_hat(self) -> np.ndarray:
        n, nd, lay, _ = self._sl()
        return self.states[:, lay[5]:lay[6]].reshape(-1, n, n)

    # -- derived ----------------------------------------------------------------

    @property
    def delta_hat(self) -> np.ndarray:
        hd = self.setup.exo.h_delta
        return np.einsum("i,sij,sj->s", hd, self.Phi_delta, self.x_delta0_hat)

    @property
    def x_hat(self) -> np.ndarray:
        if "x_hat" not in self._cache:
            n = self.setup.n
            kh = self.kappa_hat
            xi = (self.bank("z") + np.einsum("sij,sj->si", self.bank("Omega"), kh[:, :n])
                  + np.einsum("sij,sj->si", self.bank("P"), kh[:, n:2 * n])
                  + np.einsum("sij,sj->si", self.U_hat, kh[:, 2 * n:]))
            self._cache["x_hat"] = np.einsum("sij,sj->si", self.T_I_hat, xi)
        return self._cache["x_hat"]

    def pairs(self) -> dict[str, np.ndarray]:
        """Every regression pair along the trajectory (zero before ``t_eps``)."""
        if "pairs" in self._cache:
            return self._cache["pairs"]
        n, nd, lay, off = self._sl()
        S = len(self.t)
        out = {k: np.zeros((S,) + shp) for k, shp in (
            ("Y", (2 * n,)), ("Delta", ()), ("Y_theta", (3,)), ("M_theta", ()), ("Y_psi_d", (n,)),
            ("M_psi_d", ()), ("Y_T_I", (n, n)), ("M_T_I", ()), ("Y_kappa", (3 * n,)),
            ("M_kappa", (3 * n,)), ("Y_x_delta0", (nd,)), ("M_x_delta0", ()))}
        keys = list(out)
        p = self.setup.params
        for i in range(S):
            res, Yx, Mx = _pairs_at_nb(np.ascontiguousarray(self.states[i, lay[0]:lay[1]]), p, n, nd)
            for key, val in zip(keys, tuple(res) + (Yx, Mx)):
                out[key][i] = val
        self._cache["pairs"] = out
        return out

    def fe_levels(self) -> np.ndarray:
        if "fe" not in self._cache:
            phi = self.bank("phi")
            self._cache["fe"] = np.array([min_eig_sym(0.5 * (m + m.T)) for m in phi])
        return self._cache["fe"]

    def t_e(self) -> float | None:
        """First sample at which the excitation monitor fires."""
        hit = np.nonzero(self.fe_levels() >= self.setup.config.fe_threshold)[0]
        return float(self.t[hit[0]]) if hit.size else None

    def truth(self) -> dict[str, np.ndarray]:
        dec = benchmark_decomposition(self.setup.config.theta)
        return {"kappa": dec.kappa, "eta": dec.eta, "T_I": dec.T_I, "psi_d": dec.psi_d,
                "x_delta0": np.asarray(self.setup.config.x_delta0, dtype=float), "T": dec.T}

    def errors(self) -> dict[str, np.ndarray]:
        """The six error norms per sample (truth channel required)."""
        if "errors" in self._cache:
            return self._cache["errors"]
        tr = self.truth()
        U_true = self.bank("U_true")
        err = {
            "x_err": np.linalg.norm(self.x_hat - self.x, axis=1),
            "delta_err": np.abs(self.delta_hat - self.delta),
            "kappa_err": np.linalg.norm(self.kappa_hat - tr["kappa"], axis=1),
            "xdelta0_err": np.linalg.norm(self.x_delta0_hat - tr["x_delta0"], axis=1),
            "T_I_err": np.linalg.norm(self.T_I_hat - tr["T_I"], axis=(1, 2)),
            "U_err": np.linalg.norm(self.U_hat - U_true, axis=(1, 2)),
        }
        assert tuple(err) == ERROR_NAMES
        self._cache["errors"] = err
        return err


def run(cfg: SimConfig, raise_on_divergence: bool = True) -> RunResult:
    setup = build(cfg)
    n, nd = setup.n, setup.n_delta
    n_steps = int(round((cfg.t_end - cfg.t0) / cfg.h))
    every = int(round(cfg.sample_dt / cfg.h))
    i_eps = int(round((cfg.t_eps - cfg.t0) / cfg.h))
    start = time.perf_counter()
    samples, status, fail = integrate_nb(initial_state(setup), setup.params, n, nd, cfg.t0, cfg.h,
                                         n_steps, i_eps, every)
    wall = time.perf_counter() - start
    # rounded so sample times land exactly on the decimal grid (e.g. 25.0)
    t = np.round(cfg.t0 + np.arange(samples.shape[0]) * every * cfg.h, 10)
    fail_time = cfg.t0 + (fail + 1) * cfg.h if status else None
    res = RunResult(setup, t, samples, int(status), fail_time, wall)
    if status and raise_on_divergence:
        raise SimulationDivergedError(fail_time, f"non-finite state in mode {cfg.mode!r}; last sample t={t[-1]:.6g}")
    return res
