"""Command-line interface.

Subcommands::

    elastowave simulate CONFIG [--output DIR] [--duration T]
    elastowave convergence CONFIG --levels K
    elastowave wave1d --config CONFIG [--output DIR]
    elastowave verify-operators [--orders 4 6 8] [--nodes 41]
    elastowave derive-operators --order P [--kind shifted] [--emit FILE]
    elastowave verify {rayleigh,eigen-limits,impedance,sawtooth,gll,sem,lamb}

Reports are printed as ``KEY = value`` lines.  Any failure exits nonzero.
"""
import argparse
import logging
from pathlib import Path
import sys
import time

import numpy as np

from . import __version__
from . import _backend
from . import config as cf
from . import sbp
from . import timestepping as ts
from . import verify as vf
from .model import build_model
from .output import write_manifest, write_snapshot, write_trace

log = logging.getLogger("elastowave")


def _emit(key, value):
    if isinstance(value, float):
        value = f"{value:.10g}"
    print(f"{key} = {value}")


class CommandFailed(RuntimeError):
    pass


# --------------------------------------------------------------------------
# simulate / wave1d


def _simulate(cfg, out_dir, duration=None, config_path=None):
    t0 = time.perf_counter()
    model = build_model(cfg)
    res = model.run(duration=duration)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_files = []
    for name, rec in res.traces.items():
        trace_files.append(write_trace(rec, out_dir / f"{name}.csv").name)
    snap_files = []
    for k, rec in enumerate(res.snapshots):
        snap_files.append(write_snapshot(rec, out_dir / f"snapshot_{k:03d}_block{rec.block}.ewsnap").name)
    wall = time.perf_counter() - t0
    manifest = dict(
        config=str(config_path) if config_path else None,
        config_hash=cfg.hash(),
        seed=cfg.scheme.seed,
        dt=res.dt,
        lambda_max=None if np.isnan(res.lambda_max) else res.lambda_max,
        n_steps=res.n_steps,
        wall_time=wall,
        backend=_backend.DEFAULT_BACKEND,
        workers=_backend.worker_count(),
        snap_distances=res.snap_distances,
        traces=trace_files,
        snapshots=[dict(file=f, time=r.time, block=r.block) for f, r in zip(snap_files, res.snapshots)],
        version=__version__,
    )
    write_manifest(out_dir / "manifest.json", **manifest)
    _emit("CONFIG_HASH", cfg.hash())
    _emit("DT", res.dt)
    _emit("LAMBDA_MAX", res.lambda_max)
    _emit("STEPS", res.n_steps)
    _emit("TRACES", len(trace_files))
    _emit("SNAPSHOTS", len(snap_files))
    _emit("WALL_TIME", wall)
    _emit("OUTPUT", out_dir)
    return res


def cmd_simulate(args):
    cfg = cf.parse_config(args.config)
    out = args.output or Path(args.config).parent / cfg.output.directory
    _simulate(cfg, out, args.duration, args.config)


def cmd_wave1d(args):
    cfg = cf.parse_config(args.config)
    if cfg.dim != 1:
        raise CommandFailed(f"{args.config} describes a {cfg.dim}D model; wave1d needs 1D blocks")
    out = args.output or Path(args.config).parent / cfg.output.directory
    _simulate(cfg, out, args.duration, args.config)


# --------------------------------------------------------------------------
# convergence


def cmd_convergence(args):
    cfg = cf.parse_config(args.config)
    k = args.levels
    if k < 2:
        raise CommandFailed("--levels must be at least 2")
    if cfg.manufactured is not None:
        m = cfg.manufactured
        rep = vf.convergence_1d(m.p, m.kind, levels=k, n0=m.n0, t_end=m.t_end, bc=m.bc)
        for line in rep.lines():
            print(line)
        return rep
    if k < 3:
        raise CommandFailed("self-convergence needs --levels >= 3 (the finest level is the reference)")
    base = build_model(cfg, 0)
    lam0 = base.lambda_max()
    dt0 = cfg.scheme.dt if cfg.scheme.dt is not None else ts.stable_dt(lam0, cfg.scheme.epsilon)
    traces = {}
    for lev in range(k):
        model = base if lev == 0 else build_model(cfg, lev)
        # h and tau halve together, so the CFL ratio (and lambda_max h^2) stays fixed
        res = model.run(dt=dt0 / 2 ** lev, lam=lam0 * 4 ** lev, stride=2 ** lev, snapshot_times=())
        for name, rec in res.traces.items():
            traces.setdefault(name, []).append(rec.values)
        _emit(f"LEVEL[{lev}].STEPS", res.n_steps)
        _emit(f"LEVEL[{lev}].WALL_TIME", res.wall_time)
    n = min(len(t) for trs in traces.values() for t in trs)
    rep = vf.self_convergence(list(range(k)), {name: [t[:n] for t in trs] for name, trs in traces.items()})
    for line in rep.lines():
        print(line)
    return rep


# --------------------------------------------------------------------------
# operators


def cmd_verify_operators(args):
    ok = True
    rows = []
    for kind in ("shifted", "symmetric"):
        for p in args.orders:
            t = sbp.build_triplet(kind, args.nodes, p=p, a=0.0, b=1.0)
            rep = sbp.verify_triplet(t)
            exact = rep.get("identity_residual_exact")
            interior = int(rep["per_row_order"][len(t.nodes) // 2])
            closure = int(rep["per_row_order"].min())
            good = (rep["identity_residual"] < 1e-13 / t.spacing and closure >= p // 2
                    and interior >= p and rep["mirror_ok"] and (exact is None or exact == 0))
            ok &= good
            rows.append((f"{kind}_p{p}", rep["identity_residual"], exact, interior, closure, good))
    for n in args.gll:
        t = sbp.build_gll(n)
        rep = sbp.verify_triplet(t)
        order = int(rep["per_row_order"].min())
        good = rep["identity_residual"] < 1e-13 / np.diff(t.nodes).min() and order >= n - 1
        ok &= good
        rows.append((f"gll_N{n}", rep["identity_residual"], None, order, order, good))
    print(f"{'operator':<14} {'identity':>11} {'exact':>8} {'interior':>8} {'closure':>8}  status")
    for name, res, exact, interior, closure, good in rows:
        ex = "-" if exact is None else str(exact)
        print(f"{name:<14} {res:11.3e} {ex:>8} {interior:8d} {closure:8d}  {'PASS' if good else 'FAIL'}")
    for name, res, exact, interior, closure, good in rows:
        _emit(f"IDENTITY_RESIDUAL[{name}]", res)
        if exact is not None:
            _emit(f"IDENTITY_RESIDUAL_EXACT[{name}]", str(exact))
        _emit(f"INTERIOR_ORDER[{name}]", interior)
        _emit(f"CLOSURE_ORDER[{name}]", closure)
    _emit("STATUS", "PASS" if ok else "FAIL")
    if not ok:
        raise CommandFailed("operator certificate failed")


def cmd_derive_operators(args):
    sol = sbp.derive_closure(args.order, args.kind)
    res = sbp.closure_residuals(sol)
    if args.output:
        sbp.write_catalog(sol, args.output)
        _emit("CATALOG", args.output)
    else:
        sbp.write_catalog(sol, sys.stdout)
    _emit("ORDER", args.order)
    _emit("KIND", args.kind)
    _emit("CLOSURE_SIZE", sol.closure_size)
    _emit("FREE_PARAMETERS", sol.free_parameter_report.get("count", 0))
    _emit("IDENTITY_RESIDUAL", res["identity"])
    _emit("ACCURACY_RESIDUAL", res["accuracy"])
    if res["identity"] != 0 or res["accuracy"] != 0:
        raise CommandFailed("derived closure is not exact")


# --------------------------------------------------------------------------
# verify experiments


def _verify_rayleigh(args):
    c = vf.rayleigh_speed(args.vp, args.vs)
    _emit("VP", args.vp)
    _emit("VS", args.vs)
    _emit("RAYLEIGH_SPEED", c)
    _emit("RAYLEIGH_OVER_VS", c / args.vs)


def _verify_eigen(args):
    out = vf.experiment_eigen_limits(n_nodes=args.nodes)
    for k, v in out.items():
        _emit(f"LAMBDA_MAX_OVER_N2[{k}]", v)


def _verify_impedance(args):
    out = vf.experiment_impedance()
    for k in ("R", "R_exact", "T", "T_exact", "error"):
        _emit(k.upper(), out[k])
    if out["error"] > 1e-3:
        raise CommandFailed("impedance experiment outside 1e-3")


def _verify_sawtooth(args):
    from .wave1d import run_sawtooth
    for kind in ("shifted", "symmetric"):
        r = run_sawtooth(kind=kind, p=4)
        _emit(f"AHEAD_OF_FRONT_RATIO[{kind}]", r.metric)


def _verify_gll(args):
    for n in range(3, 13):
        x, w, _ = sbp.gll_nodes_weights(n)
        worst = max(abs(w @ x ** k - (1 - (-1) ** (k + 1)) / (k + 1)) for k in range(2 * n - 2))
        _emit(f"GLL_QUADRATURE_ERROR[N{n}]", float(worst))


def _verify_sem(args):
    errs = vf.experiment_sem_convergence()
    for n, e in errs.items():
        _emit(f"SEM_ERROR[N{n}]", e)


def _verify_lamb(args):
    lad = vf.experiment_lamb(level_count=args.levels, angle_deg=args.angle,
                             progress=lambda lev, r: _emit(f"LEVEL[{lev}].WALL_TIME", r.wall_time))
    rep, arrivals, expected = vf.lamb_ladder_report(lad)
    for line in rep.lines():
        print(line)
    for lev, a in enumerate(arrivals):
        _emit(f"ARRIVAL[{lev}]", a)
    _emit("ARRIVAL_EXPECTED", expected)


_VERIFY = {
    "rayleigh": _verify_rayleigh,
    "eigen-limits": _verify_eigen,
    "impedance": _verify_impedance,
    "sawtooth": _verify_sawtooth,
    "gll": _verify_gll,
    "sem": _verify_sem,
    "lamb": _verify_lamb,
}


def cmd_verify(args):
    _VERIFY[args.experiment](args)


# --------------------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(prog="elastowave", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a configured simulation and write traces, snapshots and a manifest")
    p.add_argument("config")
    p.add_argument("--output", help="output directory (default: [output].directory next to the config)")
    p.add_argument("--duration", type=float, help="override [scheme].duration")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("convergence", help="nested refinement study (h and tau halved together)")
    p.add_argument("config")
    p.add_argument("--levels", type=int, default=3)
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("wave1d", help="run a 1D configuration and write receiver traces as CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--output")
    p.add_argument("--duration", type=float)
    p.set_defaults(func=cmd_wave1d)

    p = sub.add_parser("verify-operators", help="SBP identity and accuracy certificates")
    p.add_argument("--orders", type=int, nargs="+", default=[4, 6, 8])
    p.add_argument("--nodes", type=int, default=41)
    p.add_argument("--gll", type=int, nargs="*", default=[4, 8, 12])
    p.set_defaults(func=cmd_verify_operators)

    p = sub.add_parser("derive-operators", help="derive a boundary closure and write its catalog")
    p.add_argument("--order", type=int, required=True, choices=sbp.SUPPORTED_ORDERS)
    p.add_argument("--kind", default="shifted", choices=("shifted", "symmetric"))
    p.add_argument("--emit", "--output", dest="output", help="catalog path (default: stdout)")
    p.set_defaults(func=cmd_derive_operators)

    p = sub.add_parser("verify", help="run an oracle experiment")
    p.add_argument("experiment", choices=sorted(_VERIFY))
    p.add_argument("--vp", type=float, default=3200.0)
    p.add_argument("--vs", type=float, default=1847.5)
    p.add_argument("--nodes", type=int, default=2000)
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--angle", type=float, default=0.0)
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    _backend.configure_threads()
    try:
        args.func(args)
    except cf.ConfigError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return 2
    except (CommandFailed, FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
