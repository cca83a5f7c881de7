"""``exo-observer`` command line: simulate, verify, reproduce."""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .config import ConfigError, SimConfig
from .plant import SimulationDivergedError

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3

FIG_START = 25.0


def fmt(v) -> str:
    # shortest round-trip repr
    return repr(float(v))


def write_csv(path: Path, header: list[str], columns: list[np.ndarray]) -> None:
    cols = [np.asarray(c, dtype=float) for c in columns]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*cols):
            fh.write(",".join(map(fmt, row)) + "\n")


def resolve_config(args) -> SimConfig:
    cfg = cfgmod.load(args.config) if args.config else cfgmod.load_bundled()
    return cfg.with_overrides(mode=args.mode, h=args.h, t_end=args.t_end, out_dir=args.out)


def states_table(res):
    n = res.setup.n
    header = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"x_hat{i + 1}" for i in range(n)] + ["delta", "delta_hat"]
    cols = [res.t] + list(res.x.T) + list(res.x_hat.T) + [res.delta, res.delta_hat]
    return header, cols


def errors_table(res):
    P = res.pairs()
    header, cols = ["t"], [res.t]
    if res.setup.config.truth:
        for k, v in res.errors().items():
            header.append(k)
            cols.append(v)
    mags = {
        "M_eta": P["Delta"], "M_theta": P["M_theta"], "M_psi_d": P["M_psi_d"], "M_T_I": P["M_T_I"],
        "M_kappa_min": np.abs(P["M_kappa"]).min(axis=1), "M_x_delta0": P["M_x_delta0"],
    }
    for k, v in mags.items():
        header.append(k)
        cols.append(v)
    header.append("fe_level")
    cols.append(res.fe_levels())
    return header, cols


def summary(res) -> dict:
    out = {
        "mode": res.setup.config.mode,
        "beta": res.setup.design.beta.tolist(),
        "t_e": res.t_e(),
        "wall_time_s": res.wall_time,
        "t_end": float(res.t[-1]),
    }
    if res.setup.config.truth:
        out["final_errors"] = {k: float(v[-1]) for k, v in res.errors().items()}
    return out


def simulate_one(cfg: SimConfig, out_dir: Path) -> dict:
    from .simulation import run

    res = run(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / "states.csv", *states_table(res))
    write_csv(out_dir / "errors.csv", *errors_table(res))
    info = summary(res)
    (out_dir / "summary.json").write_text(json.dumps(info, indent=2) + "\n")
    (out_dir / "config.json").write_text(cfg.dumps())
    return info


def _fail(code: int, msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def cmd_simulate(args) -> int:
    paths = args.config or [None]
    try:
        cfgs = []
        for p in paths:
            args.config = p
            cfgs.append(resolve_config(args))
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, f"invalid config: {exc}")
    except OSError as exc:
        return _fail(EXIT_CONFIG, f"cannot read config: {exc}")

    if args.dry_run:
        from .simulation import build

        for p, cfg in zip(paths, cfgs):
            try:
                setup = build(cfg)
            except ValueError as exc:
                return _fail(EXIT_CONFIG, f"invalid design: {exc}")
            beta = ", ".join(f"{b:.10g}" for b in setup.design.beta)
            print(f"{p or 'paper.json'}: ok, mode={cfg.mode}, beta = ({beta})")
        return EXIT_OK

    outs = [Path(c.out_dir) for c in cfgs]
    if len(cfgs) > 1:
        outs = [o / (Path(p).stem) for o, p in zip(outs, paths)]
    try:
        if len(cfgs) > 1:
            with ThreadPoolExecutor(max_workers=max(args.sweep or 1, 1)) as pool:
                infos = list(pool.map(simulate_one, cfgs, outs))
        else:
            infos = [simulate_one(cfgs[0], outs[0])]
    except SimulationDivergedError as exc:
        return _fail(EXIT_DIVERGED, f"{exc} (t={exc.t:.6g})")
    for o, info in zip(outs, infos):
        print(f"wrote {o}/states.csv, {o}/errors.csv (t_e={info['t_e']}, wall {info['wall_time_s']:.1f} s)")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_checks

    checks = run_checks(args.level, args.seed)
    width = max(len(c.name) for c in checks)
    print(f"{'check':<{width}}  result  worst      tol")
    for c in checks:
        print(f"{c.name:<{width}}  {'PASS' if c.passed else 'FAIL':6s}  {c.worst:.3e}  {c.tol:.0e}")
    failed = [c for c in checks if not c.passed]
    if failed:
        first = failed[0]
        print(json.dumps({"failed": first.name, "counterexample": first.counterexample, "worst": first.worst}),
              file=sys.stderr)
        return EXIT_VERIFY
    print(f"all {len(checks)} checks passed")
    return EXIT_OK


def figure_tables(res) -> dict[str, tuple[list[str], list[np.ndarray]]]:
    i0 = int(np.searchsorted(res.t, FIG_START - 1e-9))
    t = res.t[i0:]
    e = res.errors()
    xt = (res.x_hat - res.x)[i0:]
    dt = (res.delta_hat - res.delta)[i0:]
    fig1 = (["t", "x_err1", "x_err2", "x_err3", "delta_err"], [t, *xt.T, dt])
    fig2 = (["t", "kappa_err", "xdelta0_err", "T_I_err", "U_err"],
            [t, e["kappa_err"][i0:], e["xdelta0_err"][i0:], e["T_I_err"][i0:], e["U_err"][i0:]])
    return {"fig1": fig1, "fig2": fig2}


def cmd_reproduce(args) -> int:
    from .simulation import run

    try:
        cfg = resolve_config(args).with_overrides(truth=True)
    except (ConfigError, OSError) as exc:
        return _fail(EXIT_CONFIG, f"invalid config: {exc}")
    if cfg.t_end < FIG_START or abs(round((FIG_START - cfg.t0) / cfg.sample_dt) * cfg.sample_dt
                                   - (FIG_START - cfg.t0)) > 1e-9:
        return _fail(EXIT_CONFIG, "figures start at t = 25; need t_end >= 25 on the sample grid")
    try:
        res = run(cfg)
    except SimulationDivergedError as exc:
        return _fail(EXIT_DIVERGED, f"{exc} (t={exc.t:.6g})")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tables = figure_tables(res)
    for fig in (["fig1", "fig2"] if args.figure == "all" else [args.figure]):
        write_csv(out / f"{fig}.csv", *tables[fig])
        print(f"wrote {out / (fig + '.csv')}")
    return EXIT_OK


def _common(p: argparse.ArgumentParser, multi: bool = False) -> None:
    if multi:
        p.add_argument("--config", nargs="+", metavar="PATH", help="JSON config(s); default: bundled paper.json")
    else:
        p.add_argument("--config", metavar="PATH", help="JSON config; default: bundled paper.json")
    p.add_argument("--mode", choices=cfgmod.MODES)
    p.add_argument("--h", type=float, metavar="STEP", help="integration step")
    p.add_argument("--t-end", type=float, metavar="T")
    p.add_argument("--out", metavar="DIR")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="exo-observer", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run the closed loop and write states.csv / errors.csv")
    _common(s, multi=True)
    s.add_argument("--sweep", type=int, metavar="N", help="worker threads when several configs are given")
    s.add_argument("--dry-run", action="store_true", help="validate config and print beta only")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="run the invariant suites")
    v.add_argument("--level", choices=("quick", "full"), default="quick")
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("reproduce", help="write figure time series (t >= 25)")
    r.add_argument("figure", choices=("fig1", "fig2", "all"), nargs="?", default="all")
    _common(r)
    r.set_defaults(func=cmd_reproduce)
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
