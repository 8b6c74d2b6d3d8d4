"""Sources, receivers and the time loop for elastic assemblies."""
from dataclasses import dataclass
import logging
import time as _time
from typing import Callable, Optional

import numpy as np

from .. import timestepping as ts

log = logging.getLogger(__name__)


def _wavelet(w):
    if callable(w):
        return w
    nu0 = float(w)
    return lambda t: ts.ricker(t, nu0)


@dataclass(eq=False)
class PointForce:
    """Vector force ``F g(t)`` concentrated at one global node.

    The weighted forcing is ``H J f`` with ``f`` the discrete delta, so the
    node receives exactly ``F g(t)``.
    """

    node: int
    vector: np.ndarray
    wavelet: Callable

    def __post_init__(self):
        self.vector = np.asarray(self.vector, float)
        self.wavelet = _wavelet(self.wavelet)

    def pattern(self, asm):
        P = np.zeros((asm.n_nodes, asm.d))
        P[self.node] = self.vector
        return P


@dataclass(eq=False)
class Explosion:
    """Isotropic moment source ``M0 delta_ij`` at local node ``index`` of ``block``.

    Its weak form ``(f, v) = M0 div v(s)`` with the discrete divergence
    ``sum_k T_ki(s) (D_k^+ v_i)(s)`` gives the weighted forcing
    ``M0 sum_k T_ki(s) (D_k^+)^T e_s`` (a force dipole pattern along each axis).
    """

    block: int
    index: tuple
    moment: float
    wavelet: Callable

    def __post_init__(self):
        self.wavelet = _wavelet(self.wavelet)
        self.index = tuple(int(i) for i in self.index)

    def pattern(self, asm):
        blk = asm.blocks[self.block]
        d = blk.d
        Tm = blk.metric.T[self.index]
        local = np.zeros(blk.dims + (d,))
        for k in range(d):
            Dp = blk.grid.triplets[k].d_plus
            row = np.asarray(Dp[self.index[k], :].todense()).ravel() if hasattr(Dp, "todense") else np.asarray(Dp)[self.index[k]]
            sl = list(self.index)
            sl[k] = slice(None)
            local[tuple(sl)] += self.moment * row[:, None] * Tm[k][None, :]
        P = np.zeros((asm.n_nodes, d))
        np.add.at(P, asm.gids[self.block], local.reshape(-1, d))
        return P


@dataclass
class Receiver:
    name: str
    node: int
    components: tuple = None
    snap_distance: float = 0.0


def receiver_at(asm, name, point, components=None):
    """Receiver at the grid node nearest ``point`` (snap distance recorded)."""
    node, dist = asm.locate(point)
    if dist > 0:
        log.info("receiver %s snapped to node %d at distance %.3g", name, node, dist)
    return Receiver(name, node, components, dist)


def source_forcing(asm, sources):
    """``f(t)`` as a full weighted field, or ``None`` when there are no sources.

    Returns ``(forcing, scale)`` where ``scale`` bounds ``max |f|`` (used by
    the instability guard).
    """
    if not sources:
        return None, 0.0
    pats = []
    for s in sources:
        P = s.pattern(asm)
        nz = np.flatnonzero(np.any(P != 0, axis=1))
        pats.append((nz, P[nz], s.wavelet))
    scale = sum(float(np.abs(v).max()) if v.size else 0.0 for _, v, _ in pats)

    def forcing(t):
        F = np.zeros((asm.n_nodes, asm.d))
        for nz, vals, w in pats:
            F[nz] += vals * w(t)
        return F

    return forcing, scale


@dataclass
class RunResult:
    times: np.ndarray
    traces: dict
    snapshots: list
    dt: float
    lambda_max: float
    n_steps: int
    wall_time: float
    energy: Optional[np.ndarray] = None
    state: object = None
    system: object = None

    def amplitude(self, name):
        """C-norm quantity ``sqrt(sum_i u_i^2)`` of a trace."""
        return np.sqrt(np.sum(self.traces[name] ** 2, axis=1))


def run(asm, sources=(), receivers=(), duration=1.0, dt=None, epsilon=ts.DEFAULT_EPSILON,
        lam=None, stride=1, snapshot_times=(), record_energy=False, guard=True, seed=20240531,
        callback=None):
    """Integrate the assembled system from rest for ``duration`` seconds.

    ``dt=None`` takes ``stable_dt(lambda_max, epsilon)``.  Traces record the
    full displacement at the receiver nodes at steps ``k`` divisible by
    ``stride`` (so refinement levels with ``stride = dt_coarse / dt`` sample
    the same times); snapshots are the full fields at the first step with
    ``t_k >= t_snap``.
    """
    t0 = _time.perf_counter()
    forcing, scale = source_forcing(asm, list(sources))
    system = asm.system(forcing=forcing, forcing_scale=scale)
    if dt is None:
        if lam is None:
            lam = ts.lambda_max(system, seed=seed)
        dt = ts.stable_dt(lam, epsilon)
    n_steps = int(round(duration / dt)) if duration > 0 else 0
    stepper = ts.Stepper(system, dt, guard=guard)
    pending = sorted(float(t) for t in snapshot_times)
    times, rec, snaps, energy = [], {r.name: [] for r in receivers}, [], []

    def sample(state):
        k = state.step_index
        if k % stride == 0:
            U = asm.full_field(state.u_curr, state.time)
            times.append(state.time)
            for r in receivers:
                rec[r.name].append(U[r.node].copy())
            if record_energy:
                energy.append(ts.discrete_energy(system, state))
        while pending and state.time >= pending[0] - 1e-12 * max(dt, 1.0):
            snaps.append((state.time, asm.full_field(state.u_curr, state.time).copy()))
            pending.pop(0)
        if callback is not None:
            callback(state)

    if n_steps > 0:
        # the zero state already sits at step 1 (u_0 = u_1 = 0)
        sample(stepper.state)
        stepper.run(n_steps - stepper.state.step_index, sample)
    traces = {}
    for r in receivers:
        arr = np.array(rec[r.name]).reshape(-1, asm.d)
        if r.components is not None:
            arr = arr[:, list(r.components)]
        traces[r.name] = arr
    return RunResult(np.array(times), traces, snaps, float(dt), float(lam) if lam is not None else float("nan"),
                     n_steps, _time.perf_counter() - t0, np.array(energy) if record_energy else None,
                     stepper.state, system)
