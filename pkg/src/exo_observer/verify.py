"""Invariant suites behind ``exo-observer verify``.

Each check returns a :class:`CheckResult`; a failing check carries the
first counterexample as a JSON-serialisable dict. Module attributes are
looked up at call time so a patched map is what gets verified.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import canonical, drem, filters, hetero, observer
from .config import SimConfig
from .mathkit import solve_sylvester
from .plant import ExoModel, benchmark_model

N_RANDOM = 100


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    tol: float
    seconds: float = 0.0
    counterexample: dict | None = field(default=None)


def random_theta(rng: np.random.Generator, size: int = N_RANDOM) -> np.ndarray:
    """Admissible benchmark parameters: magnitudes in [0.5, 2], random signs,
    kept away from the identifiability boundary."""
    out = []
    while len(out) < size:
        th = rng.uniform(0.5, 2.0, 3) * rng.choice([-1.0, 1.0], 3)
        if abs(np.linalg.det(canonical.benchmark_psi_ab_jacobian(th))) > 1e-2:
            out.append(th)
    return np.array(out)


def _rel(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def _suite(name: str, tol: float, cases, fn) -> CheckResult:
    """Run ``fn(case) -> (error, context)`` over ``cases``; keep the worst."""
    start = time.perf_counter()
    worst, cex = 0.0, None
    for case in cases:
        err, ctx = fn(case)
        if not np.isfinite(err) or err > worst:
            worst = err if np.isfinite(err) else np.inf
            if worst > tol and cex is None:
                cex = {k: np.asarray(v).tolist() for k, v in ctx.items()} | {"error": worst}
    return CheckResult(name, worst <= tol, worst, tol, time.perf_counter() - start, cex)


# -- quick algebraic checks --------------------------------------------------------


def check_beta(cfg: SimConfig) -> CheckResult:
    exo = ExoModel(cfg.arr("A_delta"), cfg.arr("h_delta"), cfg.arr("x_delta0"))

    def fn(_):
        beta = filters.design_beta(exo, cfg.arr("G"), cfg.arr("l"))
        return float(np.abs(beta - [20.0, -8.0]).max()), {"beta": beta}

    return _suite("design_beta", 1e-10, [None], fn)


def check_sylvester(rng) -> CheckResult:
    def fn(_):
        A = rng.normal(size=(3, 3))
        G = rng.normal(size=(2, 2)) - 6 * np.eye(2)
        Q = rng.normal(size=(2, 3))
        M = solve_sylvester(A, G, Q)
        return _rel(M @ A - G @ M, Q), {"A": A, "G": G, "Q": Q}

    return _suite("solve_sylvester", 1e-9, range(N_RANDOM), fn)


def check_canonical(thetas) -> CheckResult:
    def fn(th):
        model = benchmark_model(th)
        dec = canonical.decompose(model)
        worst = max(canonical.decomposition_residuals(model, dec).values())
        psi_a, psi_b, psi_d = canonical.benchmark_psi(th)
        worst = max(worst, _rel(dec.T_I, canonical.benchmark_T_I(th)), _rel(dec.psi_a, psi_a),
                    _rel(dec.psi_b, psi_b), _rel(dec.psi_d, psi_d))
        return worst, {"theta": th}

    return _suite("canonical_identities", 1e-9, thetas, fn)


def check_mix(rng) -> CheckResult:
    def fn(_):
        R = rng.normal(size=(6, 6))
        phi = R @ R.T + 0.1 * np.eye(6)
        eta0 = rng.normal(size=6)
        pair = drem.mix(phi, phi @ eta0)
        return _rel(pair.Y, pair.M * eta0), {"phi": phi, "eta": eta0}

    return _suite("mix", 1e-9, range(N_RANDOM), fn)


def _delta_cases(thetas, rng):
    return [(th, rng.uniform(0.5, 2.0) * rng.choice([-1.0, 1.0])) for th in thetas]


def check_theta(thetas, rng) -> CheckResult:
    def fn(case):
        th, d = case
        pair = hetero.theta_regression(d * canonical.benchmark_psi_ab(th), d)
        return _rel(pair.Y, pair.M * th), {"theta": th, "Delta": d}

    return _suite("theta_regression", 1e-9, _delta_cases(thetas, rng), fn)


def _theta_pair(th, d):
    return hetero.theta_regression(d * canonical.benchmark_psi_ab(th), d)


def check_psi_d(thetas, rng) -> CheckResult:
    def fn(case):
        th, d = case
        tp = _theta_pair(th, d)
        worst = 0.0
        for printed in (False, True):
            pair = hetero.psi_d_regression(tp.Y, tp.M, printed)
            worst = max(worst, _rel(pair.Y, pair.M * canonical.benchmark_psi(th)[2]))
        return worst, {"theta": th, "Delta": d}

    return _suite("psi_d_regression", 1e-9, _delta_cases(thetas, rng), fn)


def check_t_i(thetas, rng) -> CheckResult:
    def fn(case):
        th, d = case
        tp = _theta_pair(th, d)
        worst = 0.0
        for printed in (False, True):
            pair = hetero.t_i_regression(tp.Y, tp.M, printed)
            worst = max(worst, _rel(pair.Y, pair.M * canonical.benchmark_T_I(th)))
        return worst, {"theta": th, "Delta": d}

    return _suite("t_i_regression", 1e-9, _delta_cases(thetas, rng), fn)


def check_kappa(thetas, rng) -> CheckResult:
    def fn(case):
        th, d = case
        tp = _theta_pair(th, d)
        pd = hetero.psi_d_regression(tp.Y, tp.M)
        Y = d * canonical.benchmark_eta(th)
        kappa = canonical.benchmark_kappa(th)
        worst = 0.0
        for printed in (False, True):
            pair = hetero.kappa_regression(Y, d, pd.Y, pd.M, printed)
            worst = max(worst, _rel(pair.Y, np.asarray(pair.M) * kappa))
        return worst, {"theta": th, "Delta": d}

    return _suite("kappa_regression", 1e-9, _delta_cases(thetas, rng), fn)


def check_xdelta0(rng) -> CheckResult:
    def fn(_):
        R = rng.normal(size=(2, 2))
        Vf = R @ R.T + 1e-3 * np.eye(2)
        x0 = rng.normal(size=2) * 100
        pair = hetero.xdelta0_regression(Vf, Vf @ x0)
        return _rel(pair.Y, pair.M * x0), {"V_f": Vf, "x_delta0": x0}

    return _suite("xdelta0_regression", 1e-9, range(N_RANDOM), fn)


def check_normalize(rng) -> CheckResult:
    def fn(_):
        M = 10.0 ** rng.uniform(-8, 8) * rng.choice([-1.0, 1.0])
        v = rng.normal(size=3)
        out = drem.normalize(drem.RegressionPair(M * v, M))
        return _rel(out.Y / out.M, v) + float(np.sign(out.M) != np.sign(M)), {"M": M, "v": v}

    return _suite("normalize", 1e-12, range(N_RANDOM), fn)


def check_adaptation() -> CheckResult:
    def fn(gamma):
        c = np.array([1.0])
        M = 1.0 / np.sqrt(gamma)
        pair = drem.RegressionPair(M * c, M)
        est = observer.EstimateSet.zeros(1, 1)
        h = 1e-3
        e0 = float(est.x_delta0_hat[0] - c[0])
        gains = observer.Gains(1.0, gamma, 1.0)
        zero = drem.RegressionPair(np.zeros(3), 0.0)
        zt = drem.RegressionPair(np.zeros((1, 1)), 0.0)
        for _ in range(5000):
            est = observer.adapt_step(est, zero, zt, pair, gains, h)
        ratio = (est.x_delta0_hat[0] - c[0]) / e0
        return abs(ratio / np.exp(-5.0) - 1.0), {"gamma": gamma}

    return _suite("adaptation_contraction", 1e-2, (0.5, 1.0, 4.0), fn)


def quick_checks(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    cfg = SimConfig()
    thetas = random_theta(rng)
    return [
        check_beta(cfg),
        check_sylvester(rng),
        check_canonical(thetas),
        check_mix(rng),
        check_theta(thetas, rng),
        check_psi_d(thetas, rng),
        check_t_i(thetas, rng),
        check_kappa(thetas, rng),
        check_xdelta0(rng),
        check_normalize(rng),
        check_adaptation(),
    ]


# -- truth-mode simulation checks --------------------------------------------------


def contract_residuals(res, t_from: float) -> dict[str, float]:
    """Worst relative residual of every truth-referenced contract after ``t_from``."""
    from .simulation import RunResult  # noqa: F401  (type only)

    tr = res.truth()
    P = res.pairs()
    mask = res.t >= t_from
    q, phi = res.bank("q")[mask], res.bank("phi")[mask]
    eta = tr["eta"]
    out = {}
    out["lemma1_q"] = float(
        (np.linalg.norm(q - phi @ eta, axis=1) / (np.linalg.norm(phi, ord=2, axis=(1, 2)) * np.linalg.norm(eta))).max()
    )
    truths = {
        "eta": ("Y", "Delta", eta),
        "theta": ("Y_theta", "M_theta", np.asarray(res.setup.config.theta)),
        "psi_d": ("Y_psi_d", "M_psi_d", tr["psi_d"]),
        "T_I": ("Y_T_I", "M_T_I", tr["T_I"]),
        "kappa": ("Y_kappa", "M_kappa", tr["kappa"]),
        "x_delta0": ("Y_x_delta0", "M_x_delta0", tr["x_delta0"]),
    }
    for name, (ky, km, truth) in truths.items():
        worst = 0.0
        for Y, M in zip(P[ky][mask], P[km][mask]):
            worst = max(worst, drem.RegressionPair(Y, M).residual(truth))
        out[f"pair_{name}"] = worst
    return out


def xi_residual(res, t_from: float) -> float:
    """Worst ``|xi - z - R^T kappa| / |xi|`` after ``t_from`` (truth mode)."""
    tr = res.truth()
    n = res.setup.n
    mask = res.t >= t_from
    xi = res.x[mask] @ tr["T"].T
    k = tr["kappa"]
    rhs = (res.bank("z")[mask] + res.bank("Omega")[mask] @ k[:n] + res.bank("P")[mask] @ k[n:2 * n]
           + res.bank("U_true")[mask] @ k[2 * n:])
    return float((np.linalg.norm(xi - rhs, axis=1) / np.linalg.norm(xi, axis=1)).max())


def full_checks(seed: int = 0, h: float = 1e-4) -> list[CheckResult]:
    from .simulation import run

    out = []
    cfg = SimConfig(t_end=60.0, h=h, truth=True)
    start = time.perf_counter()
    res = run(cfg)
    cr = contract_residuals(res, cfg.t_eps + 5.0)
    secs = time.perf_counter() - start
    out.append(CheckResult("truth_lemma1_q", cr["lemma1_q"] <= 1e-4, cr["lemma1_q"], 1e-4, secs))
    xr = xi_residual(res, 20.0)
    out.append(CheckResult("truth_xi_identity", xr <= 1e-4, xr, 1e-4))
    for name in ("eta", "theta", "psi_d", "T_I", "kappa", "x_delta0"):
        v = cr[f"pair_{name}"]
        cex = None if v <= 1e-3 else {"pair": name, "t_from": cfg.t_eps + 5.0, "residual": v}
        out.append(CheckResult(f"truth_pair_{name}", v <= 1e-3, v, 1e-3, 0.0, cex))

    cfg0 = SimConfig(t_end=60.0, h=h, truth=True, x_delta0=(0.0, 0.0))
    start = time.perf_counter()
    res0 = run(cfg0)
    d_err = float(np.abs(res0.delta_hat - res0.delta).max())
    out.append(CheckResult("zero_disturbance_delta", d_err <= 1e-6, d_err, 1e-6, time.perf_counter() - start))
    return out


def run_checks(level: str = "quick", seed: int = 0) -> list[CheckResult]:
    checks = quick_checks(seed)
    if level == "full":
        checks += full_checks(seed)
    return checks
