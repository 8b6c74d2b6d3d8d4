"""Independent oracles and the experiment drivers.

* :func:`materialize` is the single code path for dense operator checks;
* :func:`manufactured_forcing` derives continuous forcings symbolically and
  :func:`fd_operator_check` cross-checks them by finite differences;
* :func:`rayleigh_speed` solves the Rayleigh secular equation by bisection;
* :func:`self_convergence`, :func:`error_vs_distance` and
  :func:`arrival_time` post-process refinement ladders;
* the ``experiment_*`` functions run the numerical experiments used by the
  acceptance suite and the ``verify`` CLI.
"""
from dataclasses import dataclass, field
import logging
import time

import numpy as np
import sympy as sp
from scipy.signal import hilbert

from . import sbp
from . import timestepping as ts
from . import wave1d as w1

log = logging.getLogger(__name__)

MAX_MATERIALIZE = 10_000


# --------------------------------------------------------------------------
# dense materialization and matrix checks


def materialize(op, dim, max_dim=MAX_MATERIALIZE):
    """Dense matrix whose column ``j`` is ``op(e_j)``."""
    if dim > max_dim:
        raise ValueError(f"refusing to materialize dimension {dim} > {max_dim}")
    M = np.zeros((dim, dim))
    e = np.zeros(dim)
    for j in range(dim):
        e[j] = 1.0
        M[:, j] = np.asarray(op(e.copy()), float).ravel()
        e[j] = 0.0
    return M


def symmetry_defect(M):
    """``max |M - M^T| / max |M|``."""
    s = float(np.abs(M).max())
    return float(np.abs(M - M.T).max()) / s if s else 0.0


def definiteness_report(E, null_vectors=(), weights=None):
    """Eigenvalue bounds of the symmetric part of ``E`` off the null space.

    Returns ``(max_eig, min_eig, norm)`` of ``P E P`` where ``P`` projects out
    ``null_vectors``; ``E`` negative semidefinite means ``max_eig <= ~0``.
    """
    S = 0.5 * (E + E.T)
    n = S.shape[0]
    if len(null_vectors):
        V = np.stack([np.asarray(v, float) for v in null_vectors], axis=1)
        Qm, _ = np.linalg.qr(V)
        P = np.eye(n) - Qm @ Qm.T
        S = P @ S @ P
    ev = np.linalg.eigvalsh(S)
    return float(ev[-1]), float(ev[0]), float(np.abs(ev).max())


def check_symmetric_nsd(E, null_vectors=(), sym_tol=1e-12, eig_tol=1e-9):
    """``(ok, sym_defect, max_eig/norm)`` for the symmetry/definiteness checks."""
    sym = symmetry_defect(E)
    top, _, nrm = definiteness_report(E, null_vectors)
    ratio = top / nrm if nrm else 0.0
    return (sym < sym_tol and ratio <= eig_tol), sym, ratio


# --------------------------------------------------------------------------
# manufactured solutions


T_SYM = sp.Symbol("t", real=True)
X_SYMS = sp.symbols("x1 x2 x3", real=True)


@dataclass
class Manufactured:
    """Target ``u*`` with its forcing, both as vectorised callables ``(t, x[..., d])``."""

    solution: object
    forcing: object
    exprs: tuple
    forcing_exprs: tuple
    dim: int


def _lambdify(exprs, d):
    xs = X_SYMS[:d]
    fns = [sp.lambdify((T_SYM, *xs), e, "numpy") for e in exprs]

    def f(t, x):
        x = np.asarray(x, float)
        cols = [np.broadcast_to(np.asarray(fn(t, *[x[..., k] for k in range(d)]), float), x.shape[:-1])
                for fn in fns]
        return np.stack(cols, axis=-1)

    return f


def manufactured_forcing(problem, target):
    """Continuous forcing ``f = rho u*_tt - div sigma(u*)`` for a target solution.

    ``problem`` is ``("wave1d", rho, modulus)`` with constant or sympy
    coefficients in ``x1``, or ``("elastic", rho, C)`` with a constant Voigt
    matrix (3x3 plane strain in 2D, 6x6 in 3D).  ``target`` is a sequence of
    sympy expressions in ``t, x1, ..., xd`` (one per component).  The spatial
    operator is applied exactly, so only the discrete error remains.
    """
    kind = problem[0]
    exprs = tuple(sp.sympify(e) for e in target)
    if kind == "wave1d":
        _, rho, mod = problem
        x = X_SYMS[0]
        (u,) = exprs
        f = sp.sympify(rho) * sp.diff(u, T_SYM, 2) - sp.diff(sp.sympify(mod) * sp.diff(u, x), x)
        fexprs = (sp.simplify(f),)
        d = 1
    elif kind == "elastic":
        _, rho, C = problem
        d = len(exprs)
        C = np.asarray(C, float)
        xs = X_SYMS[:d]
        grad = [[sp.diff(exprs[i], xs[j]) for j in range(d)] for i in range(d)]
        if d == 2:
            eps = [grad[0][0], grad[1][1], grad[0][1] + grad[1][0]]
            pairs = ((0, 0), (1, 1), (0, 1))
        else:
            eps = [grad[0][0], grad[1][1], grad[2][2], grad[1][2] + grad[2][1],
                   grad[0][2] + grad[2][0], grad[0][1] + grad[1][0]]
            pairs = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))
        s = [sum(sp.nsimplify(C[a, b], rational=False) * eps[b] for b in range(len(eps))) for a in range(len(eps))]
        sig = [[None] * d for _ in range(d)]
        for a, (i, j) in enumerate(pairs):
            sig[i][j] = sig[j][i] = s[a]
        fexprs = tuple(sp.sympify(rho) * sp.diff(exprs[i], T_SYM, 2)
                       - sum(sp.diff(sig[i][j], xs[j]) for j in range(d)) for i in range(d))
    else:
        raise ValueError(f"unknown problem kind {kind!r}")
    return Manufactured(_lambdify(exprs, d), _lambdify(fexprs, d), exprs, fexprs, d)


def fd_operator_check(problem, man, points, t=0.3, h=1e-3):
    """Max relative deviation between the symbolic forcing and a central-difference
    evaluation of the continuous operator applied to ``u*`` at ``points``."""
    kind = problem[0]
    pts = np.atleast_2d(np.asarray(points, float))
    d = man.dim
    u = man.solution

    def du(x, j, tt=t):
        e = np.zeros(d)
        e[j] = h
        return (u(tt, x + e) - u(tt, x - e)) / (2 * h)

    utt = (u(t + h, pts) - 2 * u(t, pts) + u(t - h, pts)) / h ** 2
    if kind == "wave1d":
        _, rho, mod = problem
        modf = sp.lambdify(X_SYMS[0], sp.sympify(mod), "numpy")
        rhof = sp.lambdify(X_SYMS[0], sp.sympify(rho), "numpy")
        x = pts[..., 0]
        flux = lambda xx: np.asarray(modf(xx[..., 0]), float)[..., None] * du(xx, 0)  # noqa: E731
        e = np.array([h])
        div = (flux(pts + e) - flux(pts - e)) / (2 * h)
        fd = np.asarray(rhof(x), float)[..., None] * utt - div
    else:
        _, rho, C = problem
        C = np.asarray(C, float)

        def stress(xx):
            g = np.stack([du(xx, j) for j in range(d)], axis=-2)  # g[..., j, i] = du_i/dx_j
            if d == 2:
                eps = np.stack([g[..., 0, 0], g[..., 1, 1], g[..., 0, 1] + g[..., 1, 0]], -1)
                pairs = ((0, 0), (1, 1), (0, 1))
            else:
                eps = np.stack([g[..., 0, 0], g[..., 1, 1], g[..., 2, 2], g[..., 1, 2] + g[..., 2, 1],
                                g[..., 0, 2] + g[..., 2, 0], g[..., 0, 1] + g[..., 1, 0]], -1)
                pairs = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))
            s = eps @ C.T
            sig = np.zeros(xx.shape[:-1] + (d, d))
            for a, (i, j) in enumerate(pairs):
                sig[..., i, j] = sig[..., j, i] = s[..., a]
            return sig

        div = np.zeros(pts.shape[:-1] + (d,))
        for j in range(d):
            e = np.zeros(d)
            e[j] = h
            div += (stress(pts + e)[..., :, j] - stress(pts - e)[..., :, j]) / (2 * h)
        fd = float(rho) * utt - div
    exact = man.forcing(t, pts)
    scale = max(float(np.abs(exact).max()), 1e-300)
    return float(np.abs(fd - exact).max()) / scale


# --------------------------------------------------------------------------
# Rayleigh speed, arrival times, convergence


def rayleigh_speed(vp, vs, rtol=1e-9):
    """Rayleigh wave speed: root of ``(2 - c^2/vs^2)^2 = 4 sqrt((1 - c^2/vp^2)(1 - c^2/vs^2))``."""
    if not (vp > vs > 0):
        raise ValueError("need vp > vs > 0")

    def F(c):
        a, b = c * c / (vp * vp), c * c / (vs * vs)
        return (2.0 - b) ** 2 - 4.0 * np.sqrt((1.0 - a) * (1.0 - b))

    # F(0+) = 0 is the trivial root; bracket the physical one inside (0.5 vs, vs)
    lo, hi = 0.5 * vs, vs * (1.0 - 1e-15)
    flo, fhi = F(lo), F(hi)
    assert flo * fhi < 0, "no Rayleigh root bracketed"
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        fm = F(mid)
        if fm * flo <= 0:
            hi = mid
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi)


def envelope(trace):
    """Vector envelope ``sqrt(sum_i |analytic(u_i)|^2)`` of a ``(nt, d)`` trace."""
    tr = np.asarray(trace, float)
    if tr.ndim == 1:
        tr = tr[:, None]
    return np.sqrt(np.sum(np.abs(hilbert(tr, axis=0)) ** 2, axis=1))


def arrival_time(times, trace, expected, delay=0.0, window=0.2, method="envelope"):
    """Arrival time (minus the source ``delay``) of the strongest pulse near ``expected``.

    The peak is searched within ``expected * (1 +- window)``.  ``method="peak"``
    uses the amplitude ``|u|``; ``"envelope"`` (default) uses the analytic
    envelope, which peaks at the pulse centre even when the two components are
    a Hilbert pair (as for the surface Rayleigh pulse, whose amplitude ``|u|``
    has a dip at the centre).  A parabolic fit refines the sample maximum.
    """
    times = np.asarray(times, float)
    tr = np.asarray(trace, float)
    if method == "envelope":
        a = envelope(tr)
    elif method == "peak":
        a = np.sqrt(np.sum(tr.reshape(len(times), -1) ** 2, axis=1))
    else:
        raise ValueError(f"unknown method {method!r}")
    lo, hi = delay + expected * (1 - window), delay + expected * (1 + window)
    mask = (times >= lo) & (times <= hi)
    if not np.any(mask):
        raise ValueError("arrival window lies outside the trace")
    k = int(np.flatnonzero(mask)[np.argmax(a[mask])])
    tk = times[k]
    if 0 < k < len(times) - 1:
        y0, y1, y2 = a[k - 1], a[k], a[k + 1]
        den = y0 - 2 * y1 + y2
        if den < 0:
            tk += 0.5 * (y0 - y2) / den * (times[k + 1] - times[k])
    return float(tk - delay)


def cnorm_error(trace, ref):
    """Relative C-norm error ``max_t |u - u_ref| / max_t |u_ref|`` of vector traces."""
    trace, ref = np.asarray(trace, float), np.asarray(ref, float)
    if trace.shape != ref.shape:
        raise ValueError(f"trace shapes differ: {trace.shape} vs {ref.shape}")
    diff = np.sqrt(np.sum((trace - ref).reshape(len(ref), -1) ** 2, axis=1)).max()
    scale = np.sqrt(np.sum(ref.reshape(len(ref), -1) ** 2, axis=1)).max()
    return float(diff / scale) if scale > 0 else float(diff)


@dataclass
class ConvergenceReport:
    """Errors per level (vs the finest level or an exact solution) and observed orders."""

    levels: list
    errors: dict
    orders: dict
    reference: str = "finest"
    meta: dict = field(default_factory=dict)

    def lines(self):
        out = [f"REFERENCE = {self.reference}", f"LEVELS = {len(self.levels)}"]
        for name in self.errors:
            for lev, e in zip(self.levels, self.errors[name]):
                out.append(f"ERROR[{name}][{lev}] = {e:.6e}")
            for i, o in enumerate(self.orders[name]):
                out.append(f"ORDER[{name}][{i}] = {o:.4f}")
        return out


def self_convergence(levels, traces):
    """Self-convergence from nested levels.

    ``traces[name]`` is a list of same-time-sampled traces, coarsest first.
    Errors are taken against the finest level; the observed order of the
    coarser pair is the Richardson estimate
    ``log2(|u_h - u_h/2| / |u_h/2 - u_h/4|)`` over consecutive triples (the
    finest level is its own reference, so its error is omitted).
    """
    errors, orders = {}, {}
    for name, trs in traces.items():
        ref = trs[-1]
        errs = [cnorm_error(tr, ref) for tr in trs[:-1]]
        ords = []
        for i in range(len(trs) - 2):
            e1 = cnorm_error(trs[i], trs[i + 1])
            e2 = cnorm_error(trs[i + 1], trs[i + 2])
            ords.append(float(np.log2(e1 / e2)) if e2 > 0 else float("inf"))
        errors[name] = errs
        orders[name] = ords
    return ConvergenceReport(list(levels[:-1]), errors, orders)


def error_vs_distance(run, reference, distances):
    """Relative C-norm error per receiver against ``reference`` (same layout)."""
    if len(run) != len(reference) or len(run) != len(distances):
        raise ValueError("run, reference and distances must share the receiver layout")
    errs = np.array([cnorm_error(a, b) for a, b in zip(run, reference)])
    return np.asarray(distances, float), errs


# --------------------------------------------------------------------------
# 1D experiments


def experiment_eigen_limits(n_nodes=2000, orders=(4, 6, 8), method="power", rel_tol=1e-6):
    """``lambda_max / N^2`` of the Neumann 1D operator with ``h = 1/(N-1)``.

    Also returns the periodic ``p = 4`` value (``N`` nodes on a unit period).
    """
    out = {}
    for p in orders:
        t = sbp.build_shifted_uniform(p, n_nodes, 1.0 / (n_nodes - 1))
        prob = w1.Wave1DProblem(t, w1.Medium1D.uniform(n_nodes))
        sysw = w1.assemble_system([prob], w1.Neumann(), w1.Neumann()).system
        out[p] = ts.lambda_max(sysw, rel_tol=rel_tol, method=method) / n_nodes ** 2
    per = sbp.build_periodic(4, n_nodes, 1.0 / n_nodes)
    Dp = per.d_plus
    A = (Dp.T @ Dp).tocsr() * (1.0 / n_nodes)
    g = np.full(n_nodes, 1.0 / n_nodes)
    psys = ts.SecondOrderSystem(g, A.__matmul__, null_space=(np.ones(n_nodes),))
    out["periodic4"] = ts.lambda_max(psys, rel_tol=rel_tol, method=method) / n_nodes ** 2
    return out


def experiment_impedance(rho=(1.0, 2.5), speed=(1.0, 1.6), n_nodes=801, p=4, kind="shifted",
                         width=0.04, x0=-0.5, t_end=0.8):
    """Reflection/transmission of a right-moving Gaussian at a two-block interface.

    Blocks are ``[-1, 0]`` and ``[0, L2]`` with ``L2`` long enough that no wave
    reaches the outer (non-reflecting) ends.  Returns measured and analytic
    displacement coefficients ``R = (Z1 - Z2)/(Z1 + Z2)``, ``T = 1 + R``.
    """
    Z1, Z2 = rho[0] * speed[0], rho[1] * speed[1]
    L2 = speed[1] / speed[0]
    n2 = n_nodes
    t1 = sbp.build_triplet(kind, n_nodes, p=p, a=-1.0, b=0.0)
    t2 = sbp.build_triplet(kind, n2, p=p, a=0.0, b=L2)
    b1 = w1.Wave1DProblem(t1, w1.Medium1D.uniform(n_nodes, rho[0], speed[0]))
    b2 = w1.Wave1DProblem(t2, w1.Medium1D.uniform(n2, rho[1], speed[1]))
    wsys = w1.assemble_system([b1, b2], w1.NonReflecting(-speed[0]), w1.NonReflecting(speed[1]))
    sysw = wsys.system
    lam = ts.lambda_max(sysw, rel_tol=1e-8)
    dt = ts.stable_dt(lam, 0.1)
    x = wsys.x
    pulse = lambda tt: np.exp(-(((x - x0) - speed[0] * tt) / width) ** 2) * (x <= 0)  # noqa: E731
    st = ts.StepperState(pulse(dt)[wsys.free], pulse(0.0)[wsys.free], 1, dt)
    n = int(round(t_end / dt))
    st = ts.integrate(sysw, dt, n - 1, st)
    u = wsys.full(st.u_curr, st.time)
    left, right = x < 0, x > 0
    i1 = np.argmax(np.abs(u * left))
    i2 = np.argmax(np.abs(u * right))
    R, T = float(u[i1]), float(u[i2])
    Ra = (Z1 - Z2) / (Z1 + Z2)
    return dict(R=R, T=T, R_exact=Ra, T_exact=1.0 + Ra,
                error=max(abs(R - Ra), abs(T - 1.0 - Ra)), dt=dt, steps=n)


def manufactured_1d(p=4, kind="shifted", n_nodes=41, t_end=0.5, cfl_eps=0.1, bc="dirichlet"):
    """1D manufactured run: max nodal error over ``0 < t <= t_end``.

    The target ``u* = sin(3x + 0.5)(1 + t + t^2)`` is quadratic in time, which
    the central scheme integrates exactly, so the measured error is spatial.
    """
    x = X_SYMS[0]
    rho, mod = 1.0, 1.0
    if bc == "periodic":
        return _manufactured_periodic(p, kind, n_nodes, t_end, cfl_eps)
    ustar = sp.sin(3 * x + sp.Rational(1, 2)) * (1 + T_SYM + T_SYM ** 2)
    man = manufactured_forcing(("wave1d", rho, mod), (ustar,))
    t = sbp.build_triplet(kind, n_nodes, p=p, a=0.0, b=1.0)
    xs = t.nodes[:, None]
    forcing = lambda tt: man.forcing(tt, xs)[:, 0]  # noqa: E731
    prob = w1.Wave1DProblem(t, w1.Medium1D.uniform(n_nodes, rho, np.sqrt(mod)), forcing=forcing)
    ua = lambda tt, xx: man.solution(tt, np.atleast_1d(xx)[:, None])[:, 0]  # noqa: E731
    if bc == "dirichlet":
        ends = (w1.Dirichlet(lambda tt: float(ua(tt, 0.0)[0])), w1.Dirichlet(lambda tt: float(ua(tt, 1.0)[0])))
    elif bc == "neumann":
        dux = sp.lambdify((T_SYM, x), sp.diff(ustar, x), "numpy")
        ends = (w1.Neumann(lambda tt: float(dux(tt, 0.0))), w1.Neumann(lambda tt: float(dux(tt, 1.0))))
    else:
        raise ValueError(f"unknown boundary condition {bc!r}")
    wsys = w1.assemble_system([prob], *ends)
    lam = ts.lambda_max(wsys.system, rel_tol=1e-6)
    dt0 = ts.stable_dt(lam, cfl_eps)
    n = int(np.ceil(t_end / dt0))
    dt = t_end / n
    ex = lambda tt: ua(tt, t.nodes)  # noqa: E731
    st = ts.StepperState(ex(dt)[wsys.free], ex(0.0)[wsys.free], 1, dt)
    worst = [0.0]

    def track(state):
        u = wsys.full(state.u_curr, state.time)
        worst[0] = max(worst[0], float(np.abs(u - ex(state.time)).max()))

    ts.integrate(wsys.system, dt, n - 1, st, callback=track)
    return worst[0], dt


def _manufactured_periodic(p, kind, n_nodes, t_end, cfl_eps):
    x = X_SYMS[0]
    ustar = sp.sin(2 * sp.pi * x + sp.Rational(1, 2)) * (1 + T_SYM + T_SYM ** 2)
    man = manufactured_forcing(("wave1d", 1.0, 1.0), (ustar,))
    h = 1.0 / n_nodes
    pair = sbp.build_periodic(p, n_nodes, h, kind)
    A = (pair.d_plus.T @ pair.d_plus).tocsr() * h
    xs = (np.arange(n_nodes) * h)[:, None]
    g = np.full(n_nodes, h)
    system = ts.SecondOrderSystem(g, A.__matmul__, rhs=lambda tt: h * man.forcing(tt, xs)[:, 0],
                                  null_space=(np.ones(n_nodes),))
    lam = ts.lambda_max(system, rel_tol=1e-6)
    n = int(np.ceil(t_end / ts.stable_dt(lam, cfl_eps)))
    dt = t_end / n
    ex = lambda tt: man.solution(tt, xs)[:, 0]  # noqa: E731
    worst = [0.0]

    def track(state):
        worst[0] = max(worst[0], float(np.abs(state.u_curr - ex(state.time)).max()))

    ts.integrate(system, dt, n - 1, ts.StepperState(ex(dt), ex(0.0), 1, dt), callback=track)
    return worst[0], dt


def convergence_1d(p=4, kind="shifted", levels=4, n0=21, t_end=0.5, bc="dirichlet"):
    """Nested refinements of :func:`manufactured_1d`; returns a :class:`ConvergenceReport`.

    ``bc`` is ``"dirichlet"``, ``"neumann"`` or ``"periodic"`` (``n0`` nodes
    per period, doubled per level).
    """
    if bc == "periodic":
        ns = [n0 * 2 ** k for k in range(levels)]
    else:
        ns = [(n0 - 1) * 2 ** k + 1 for k in range(levels)]
    errs = [manufactured_1d(p, kind, n, t_end, bc=bc)[0] for n in ns]
    orders = [float(np.log2(errs[i] / errs[i + 1])) for i in range(levels - 1)]
    return ConvergenceReport(ns, {"u": errs}, {"u": orders}, reference="exact")


# --------------------------------------------------------------------------
# elastic experiments


def experiment_lamb(level_count=3, p=8, kind="shifted", angle_deg=0.0, nodes=(91, 61),
                    extent=((-240.0, 840.0), (-500.0, 0.0)), t_end=0.62, base_dt=4e-4,
                    offsets=None, progress=None):
    """Lamb refinement ladder (``h, h/2, h/4`` with ``dt, dt/4, dt/16``).

    Returns the times, the per-level surface traces (receivers at the given
    arclength offsets, default every coarse node from 12 m to 600 m), and
    timing information.
    """
    from .elastic import run as er
    from .elastic import scenarios as sc

    (x0, x1), _ = extent
    h = (x1 - x0) / (nodes[0] - 1)
    if offsets is None:
        offsets = tuple(float(h * k) for k in range(1, int(round(600.0 / h)) + 1))
    traces, walls, info = [], [], []
    times = None
    for lev in range(level_count):
        s = sc.lamb(lev, p=p, kind=kind, nodes=nodes, extent=extent, receiver_offsets=offsets,
                    angle_deg=angle_deg)
        dt = base_dt / 4 ** lev
        r = er.run(s.assembly, s.sources, s.receivers, duration=t_end, dt=dt, stride=4 ** lev)
        traces.append(np.stack([r.traces[rc.name] for rc in s.receivers]))
        walls.append(r.wall_time)
        info.append(s.info)
        times = r.times
        if progress is not None:
            progress(lev, r)
    return dict(times=times, traces=traces, offsets=np.array(offsets), wall=walls, info=info,
                delay=ts.RICKER_DELAY_CYCLES / sc.LAMB_NU0)


def lamb_ladder_report(ladder, receiver_offset=600.0):
    """Observed order and Rayleigh arrival from an :func:`experiment_lamb` ladder."""
    from .elastic import scenarios as sc

    offs = ladder["offsets"]
    i = int(np.argmin(np.abs(offs - receiver_offset)))
    trs = [tr[i] for tr in ladder["traces"]]
    rep = self_convergence(list(range(len(trs))), {f"r{offs[i]:g}": trs})
    cR = rayleigh_speed(sc.LAMB_VP, sc.LAMB_VS)
    expected = offs[i] / cR
    arrivals = [arrival_time(ladder["times"], tr, expected, ladder["delay"]) for tr in trs]
    return rep, arrivals, expected


def experiment_sem_convergence(n_per_cell=(6, 10), cells=(2, 2), extent=1.0):
    """Static manufactured elastic problem on a 2x2 GLL cell assembly.

    ``u* = (sin(x1 + 2 x2), cos(2 x1 - x2))`` on ``[0, 1]^2`` with Dirichlet
    faces; the discrete system ``A u = f`` is solved densely.  Returns the max
    nodal errors per cell size.
    """
    from .elastic import DirichletFace, isotropic_stiffness
    from .elastic.sem import sem_assembly

    C = isotropic_stiffness(2.0, 1.0, 1.0, dim=2)
    x1, x2 = X_SYMS[:2]
    target = (sp.sin(x1 + 2 * x2), sp.cos(2 * x1 - x2))
    man = manufactured_forcing(("elastic", 1.0, C), target)
    errs = {}
    for N in n_per_cell:
        exact = lambda t, x: man.solution(0.0, x)  # noqa: E731
        asm = sem_assembly(cells, N, ((0.0, extent), (0.0, extent)), 1.0, C, outer=DirichletFace(exact))
        errs[N] = static_solve_error(asm, man)
    return errs


def static_solve_error(asm, man):
    """Max nodal error of the static discrete solution ``A u = f - A_lift a``."""
    f_w = np.zeros((asm.n_nodes, asm.d))
    for b, g in zip(asm.blocks, asm.gids):
        fx = man.forcing(0.0, b.x)  # u* is static, so f = -div sigma(u*)
        np.add.at(f_w, g, (b.W * b.metric.J)[..., None].reshape(-1, 1) * fx.reshape(-1, asm.d))
    system = asm.system(forcing=lambda t: f_w)
    A = materialize(system.apply_A, system.dof)
    u = np.linalg.solve(A, system.rhs(0.0))
    U = asm.full_field(u, 0.0)
    return float(np.abs(U - man.solution(0.0, asm.x)).max())


def experiment_timing(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


# --------------------------------------------------------------------------
# symmetry sweep and long-run stability


def _layer_block(d, n, p, bottom, top, rho, C, faces, name="", extent=1.0, kind="shifted"):
    from . import geometry as geo
    from .elastic import ElasticBlock

    tr = [sbp.build_triplet(kind, n, p=p, a=0.0, b=extent) for _ in range(d - 1)]
    tr.append(sbp.build_triplet(kind, n, p=p, a=0.0, b=1.0))
    return ElasticBlock(geo.build_grid(geo.LayerMapping(d, bottom, top), tr), rho, C, faces, name)


def tiny_configurations(dims=(2, 3), p=4, n=9):
    """Small curvilinear assemblies covering every boundary and interface type.

    Returns ``{name: assembly}``: free surface, Dirichlet, non-reflecting and
    mixed faces on a single topographic block, a two-block interface with a
    material jump, and (2D) a 2x2 GLL-cell assembly.
    """
    from . import geometry as geo
    from .elastic import (DirichletFace, InterfaceFace, NonReflectingFace, assemble,
                          isotropic_stiffness, tti_stiffness)
    from .elastic.sem import sem_assembly

    out = {}
    for d in dims:
        hext = ((0.0, 1.0),) * (d - 1)
        topo = geo.gaussian_topography(3, 0.08, 3, hext, base=0.0)
        mid = topo.scaled(0.5, base=-0.5)
        flat = geo.FlatSurface(-1.0)
        if d == 3:
            C1 = tti_stiffness(2.0, 1.2, 2.0, 0.334, 0.575, 0.818, 45.0, 45.0)
            C2 = tti_stiffness(3.0, 1.6, 2.0, 0.022, 0.087, -0.072, 90.0, 15.0)
        else:
            C1 = isotropic_stiffness(2.0, 1.2, 2.0, dim=2)
            C2 = isotropic_stiffness(3.0, 1.6, 2.5, dim=2)
        top, bottom = geo.FACE_NAMES[2 * d - 1], geo.FACE_NAMES[2 * d - 2]
        sides = geo.FACE_NAMES[:2 * d - 2]
        nr, dr = NonReflectingFace(), DirichletFace()
        out[f"free_surface_{d}d"] = assemble([_layer_block(d, n, p, flat, topo, 2.0, C1, {})])
        out[f"dirichlet_{d}d"] = assemble([_layer_block(d, n, p, flat, topo, 2.0, C1, {f: dr for f in geo.FACE_NAMES[:2 * d]})])
        out[f"nonreflecting_{d}d"] = assemble([_layer_block(d, n, p, flat, topo, 2.0, C1, {f: nr for f in geo.FACE_NAMES[:2 * d]})])
        mixed = {f: nr for f in sides}
        mixed[sides[0]] = dr
        mixed[bottom] = nr
        out[f"mixed_{d}d"] = assemble([_layer_block(d, n, p, flat, topo, 2.0, C1, mixed)])
        up = dict({f: nr for f in sides}, **{bottom: InterfaceFace(1, top)})
        lo = dict({f: nr for f in sides}, **{top: InterfaceFace(0, bottom), bottom: nr})
        out[f"interface_{d}d"] = assemble([_layer_block(d, n, p, mid, topo, 2.0, C1, up, "upper"),
                                           _layer_block(d, n, p, geo.FlatSurface(-1.0), mid, 2.5 if d == 2 else 2.0, C2, lo, "lower")])
    if 2 in dims:
        C = isotropic_stiffness(2.0, 1.0, 1.0, dim=2)
        out["gll_cells_2d"] = sem_assembly((2, 2), 5, ((0.0, 1.0), (0.0, 1.0)), 1.0, C)
    return out


def assembly_matrix_check(asm, sym_tol=1e-12, eig_tol=1e-9):
    """Dense checks of one assembly: ``E = -A`` symmetric and NSD off the null space; ``B`` symmetric PSD; mass positive."""
    system = asm.system()
    A = materialize(system.apply_A, system.dof)
    ok, sym, ratio = check_symmetric_nsd(-A, system.null_space, sym_tol, eig_tol)
    res = dict(dof=system.dof, symmetry=sym, max_eig_ratio=ratio, mass_positive=bool(np.all(system.g_diag > 0)))
    res["ok"] = bool(ok and res["mass_positive"])
    if system.damped:
        B = materialize(system.apply_B, system.dof)
        bsym = symmetry_defect(B) if np.abs(B).max() > 0 else 0.0
        bmin = float(np.linalg.eigvalsh(0.5 * (B + B.T))[0]) / float(np.abs(B).max())
        res.update(damping_symmetry=bsym, damping_min_eig_ratio=bmin)
        res["ok"] = bool(res["ok"] and bsym < sym_tol and bmin >= -eig_tol)
    return res


def experiment_symmetry_sweep(dims=(2, 3), p=4, n=9):
    return {name: assembly_matrix_check(asm) for name, asm in tiny_configurations(dims, p, n).items()}


def _random_state(system, dt, seed):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(system.dof)
    if system.null_space:
        # remove rigid motions so the run starts off the kernel
        V = np.stack(system.null_space, axis=1)
        Qm, _ = np.linalg.qr(V)
        u -= Qm @ (Qm.T @ u)
    return ts.StepperState(u.copy(), u.copy(), 1, dt)


def _energy_run(system, dt, n_steps, state, source_off_step=None, every=100):
    stepper = ts.Stepper(system, dt, state)
    energy = [ts.discrete_energy(system, stepper.state)]
    steps = [stepper.state.step_index]
    for k in range(n_steps // every):
        stepper.run(every)
        energy.append(ts.discrete_energy(system, stepper.state))
        steps.append(stepper.state.step_index)
    energy, steps = np.array(energy), np.array(steps)
    out = dict(steps=n_steps, energy_first=float(energy[0]), energy_last=float(energy[-1]),
               max_abs_u=float(np.abs(stepper.state.u_curr).max()))
    if source_off_step is None:
        out["drift"] = float(np.abs(energy - energy[0]).max() / abs(energy[0]))
    else:
        after = energy[steps >= source_off_step]
        inc = np.diff(after)
        out["max_increase"] = float(inc.max() / after[0]) if inc.size else 0.0
        out["energy_at_source_off"] = float(after[0])
    return out


def stability_configurations():
    """Stability configurations (1D Dirichlet, Robin, non-reflecting; elastic mixes).

    Each entry is ``(system, kind)`` with ``kind`` ``"conservative"`` (random
    data, no forcing, energy must be constant) or ``"damped"`` (a Ricker
    source that switches off, energy must not grow afterwards).
    """
    from .elastic import run as er

    cfgs = {}
    n = 101
    t = sbp.build_triplet("shifted", n, p=4, a=0.0, b=1.0)
    xs = t.nodes
    med = w1.Medium1D(1.0 + 0.5 * np.sin(2 * np.pi * xs) ** 2, 1.0 + 0.3 * xs)
    prob = w1.Wave1DProblem(t, med)
    cfgs["dirichlet_1d"] = (w1.assemble_system([prob], w1.Dirichlet(), w1.Dirichlet()).system, "conservative")
    cfgs["robin_1d"] = (w1.assemble_system([prob], w1.Robin(-0.7), w1.Robin(1.3)).system, "conservative")
    cfgs["neumann_1d"] = (w1.assemble_system([prob], w1.Neumann(), w1.Neumann()).system, "conservative")
    t2 = sbp.build_triplet("shifted", n, p=4, a=1.0, b=2.0)
    prob2 = w1.Wave1DProblem(t2, w1.Medium1D.uniform(n, 2.5, 1.6))
    cfgs["interface_1d"] = (w1.assemble_system([prob, prob2], w1.Dirichlet(), w1.Neumann()).system, "conservative")
    src = w1.point_source(t, 30, lambda tt: ts.ricker(tt, 5.0))
    prob_s = w1.Wave1DProblem(t, med, forcing=src)
    cfgs["nonreflecting_1d"] = (w1.assemble_system([prob_s], w1.NonReflecting(-1.0), w1.NonReflecting(1.3)).system,
                                "damped")

    tiny = tiny_configurations(dims=(2,), p=4, n=13)
    cfgs["free_surface_2d"] = (tiny["free_surface_2d"].system(), "conservative")
    cfgs["dirichlet_2d"] = (tiny["dirichlet_2d"].system(), "conservative")
    cfgs["gll_cells_2d"] = (tiny["gll_cells_2d"].system(), "conservative")
    for name in ("mixed_2d", "interface_2d"):
        asm = tiny[name]
        b = asm.blocks[0]
        centre = tuple(s // 2 for s in b.dims)
        forcing, scale = er.source_forcing(asm, [er.Explosion(0, centre, 1.0, 4.0)])
        cfgs[name] = (asm.system(forcing=forcing, forcing_scale=scale), "damped")
    tiny3 = tiny_configurations(dims=(3,), p=4, n=9)
    cfgs["free_surface_3d"] = (tiny3["free_surface_3d"].system(), "conservative")
    asm = tiny3["interface_3d"]
    forcing, scale = er.source_forcing(asm, [er.Explosion(0, (4, 4, 4), 1.0, 4.0)])
    cfgs["interface_3d"] = (asm.system(forcing=forcing, forcing_scale=scale), "damped")
    return cfgs


def experiment_stability(n_steps=100_000, epsilon=0.05, names=None, seed=11, every=100):
    """Run every stability configuration ``n_steps`` steps at ``stable_dt(lambda_max, epsilon)``."""
    out = {}
    for name, (system, kind) in stability_configurations().items():
        if names is not None and name not in names:
            continue
        t0 = time.perf_counter()
        lam = ts.lambda_max(system, rel_tol=1e-10, seed=seed, method="lanczos")
        dt = ts.stable_dt(lam, epsilon)
        try:
            if kind == "conservative":
                res = _energy_run(system, dt, n_steps, _random_state(system, dt, seed), every=every)
            else:
                # the Ricker pulse (delay 1.6/nu0) is below 1e-9 after 3.2/nu0; nu0 = 5 or 4
                off = int(np.ceil(0.9 / dt))
                res = _energy_run(system, dt, n_steps, ts.zero_state(system, dt), source_off_step=off, every=every)
            res["guard_fired"] = False
        except ts.InstabilityError as exc:
            res = dict(guard_fired=True, error=str(exc))
        res.update(kind=kind, dt=dt, lambda_max=lam, wall_time=time.perf_counter() - t0)
        out[name] = res
    return out


# --------------------------------------------------------------------------
# 3D anisotropic analog


def experiment_tti(n_steps=2000, epsilon=0.05, n_horizontal=61, n_top=25, n_bottom=21, p=8, seed=7):
    """Two-layer TTI model with topography: ``n_steps`` at the CFL step, energy history."""
    from .elastic import run as er
    from .elastic import scenarios as sc

    t0 = time.perf_counter()
    s = sc.tti_two_layer(n_horizontal, n_top, n_bottom, p=p, seed=seed)
    forcing, scale = er.source_forcing(s.assembly, s.sources)
    system = s.assembly.system(forcing=forcing, forcing_scale=scale)
    lam = ts.lambda_max(system, seed=seed)
    dt = ts.stable_dt(lam, epsilon)
    try:
        r = er.run(s.assembly, s.sources, s.receivers, duration=n_steps * dt, dt=dt, lam=lam,
                   record_energy=True, stride=20)
        guard = False
    except ts.InstabilityError:
        r, guard = None, True
    out = dict(guard_fired=guard, dt=dt, lambda_max=lam, n_nodes=s.assembly.n_nodes,
               wall_time=time.perf_counter() - t0, info=s.info)
    if r is not None:
        off = ts.RICKER_DELAY_CYCLES * 2 / 10.0
        e, times = r.energy, r.times
        after = e[times >= off]
        out.update(steps=r.n_steps, energy=e, times=times, traces=r.traces,
                   energy_max=float(e.max()), energy_final=float(e[-1]),
                   max_increase_after_source=float(np.diff(after).max() / after[0]) if after.size > 1 else 0.0,
                   finite=bool(np.all(np.isfinite(r.state.u_curr))))
    return out


def tti_tiny_check(p=4, n=9, seed=7):
    """Dense symmetry/definiteness of the same two-layer TTI configuration on a tiny grid."""
    from .elastic import scenarios as sc

    s = sc.tti_two_layer(n, n, n, p=p, seed=seed)
    return assembly_matrix_check(s.assembly)
