"""Compare the numba and numpy kernel backends.

Each backend runs in its own subprocess with ``ELASTOWAVE_BACKEND`` set, so
the selection goes through the same environment switch users rely on.  For
every case the child times ``apply_E`` (the spatial operator) and a short
leapfrog run, and reports a checksum so the parent can confirm both
backends compute the same thing.

    python benchmarks/bench_kernels.py                # all cases
    python benchmarks/bench_kernels.py --case lamb --repeat 20
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

CASES = ("lamb", "oblique", "tti")


def build(case):
    from elastowave.elastic import scenarios as sc

    if case == "lamb":
        return sc.lamb(0)
    if case == "oblique":
        return sc.lamb(0, angle_deg=10.0)
    if case == "tti":
        return sc.tti_two_layer(41, 21, 17)
    raise ValueError(f"unknown case {case!r}")


def child(case, repeat, steps):
    from elastowave import kernels
    from elastowave.elastic import run as er

    t0 = time.perf_counter()
    s = build(case)
    asm = s.assembly
    setup = time.perf_counter() - t0
    u = np.random.default_rng(0).standard_normal((asm.n_nodes, asm.d))
    t0 = time.perf_counter()
    first = asm.apply_E(u)  # includes numba compilation on a cold cache
    warm = time.perf_counter() - t0
    t0 = time.perf_counter()
    for _ in range(repeat):
        asm.apply_E(u)
    per_apply = (time.perf_counter() - t0) / repeat
    r = er.run(asm, s.sources, s.receivers, duration=steps * 4e-5, dt=4e-5)
    return dict(case=case, backend=kernels.active_backend(), nodes=int(asm.n_nodes), setup=setup,
                first_apply=warm, apply=per_apply, run=r.wall_time, steps=r.n_steps,
                checksum=float(np.linalg.norm(first)), run_checksum=float(np.linalg.norm(r.state.u_curr)))


def run_backend(backend, case, repeat, steps):
    env = dict(os.environ, ELASTOWAVE_BACKEND=backend)
    cmd = [sys.executable, __file__, "--child", "--case", case, "--repeat", str(repeat), "--steps", str(steps)]
    proc = subprocess.run(cmd, env=env, capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(f"{backend} benchmark for {case!r} failed:\n{proc.stderr}")
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--case", choices=CASES + ("all",), default="all")
    ap.add_argument("--repeat", type=int, default=10, help="timed operator applications")
    ap.add_argument("--steps", type=int, default=50, help="leapfrog steps in the timed run")
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args(argv)

    if args.child:
        print(json.dumps(child(args.case, args.repeat, args.steps)))
        return 0

    cases = CASES if args.case == "all" else (args.case,)
    print(f"{'case':8s} {'nodes':>7s} {'backend':8s} {'first':>8s} {'apply':>9s} {'run':>8s} {'speedup':>8s}")
    for case in cases:
        res = {b: run_backend(b, case, args.repeat, args.steps) for b in ("numpy", "numba")}
        for b, r in res.items():
            speed = res["numpy"]["apply"] / r["apply"]
            print(f"{case:8s} {r['nodes']:7d} {r['backend']:8s} {r['first_apply']:7.3f}s "
                  f"{r['apply'] * 1e3:7.2f}ms {r['run']:7.2f}s {speed:7.1f}x")
        a, b = res["numpy"], res["numba"]
        rel = abs(a["checksum"] - b["checksum"]) / a["checksum"]
        rel_run = abs(a["run_checksum"] - b["run_checksum"]) / max(a["run_checksum"], 1e-300)
        print(f"{case:8s} backends agree: operator {rel:.1e}, after {a['steps']} steps {rel_run:.1e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
