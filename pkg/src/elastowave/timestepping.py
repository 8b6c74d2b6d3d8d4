"""Explicit central time stepping of ``G u_tt + B u_t + A u = f``.

The scheme is

    G (u+ - 2u + u-)/tau^2 + B (u+ - u-)/(2 tau) + A u = f(t_k),

which is explicit because ``G`` is diagonal and ``B`` is diagonal or
block-diagonal with small (d x d) blocks.  It is stable when
``tau <= 2 / sqrt((1 + eps) lambda_max)``, where ``lambda_max`` is the largest
generalized eigenvalue of ``(A, G)``.
"""
from dataclasses import dataclass, field, replace
import logging
from typing import Callable, Optional

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_EPSILON = 0.1
RICKER_DELAY_CYCLES = 1.6
GUARD_FACTOR = 1e12


class InstabilityError(RuntimeError):
    """Raised when the state becomes non-finite or grows beyond the guard."""


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class BlockDamping:
    """Block-diagonal damping: ``mats[m]`` acts on the ``d`` dofs of node ``nodes[m]``.

    Dofs are node-major, so node ``n`` owns dofs ``n*d .. n*d + d - 1``.
    """

    nodes: np.ndarray
    mats: np.ndarray

    @property
    def d(self):
        return self.mats.shape[1]

    def apply(self, v, out):
        d = self.d
        V = v.reshape(-1, d)
        O = out.reshape(-1, d)
        O[self.nodes] += np.einsum("mij,mj->mi", self.mats, V[self.nodes])
        return out

    def dense(self, dof):
        B = np.zeros((dof, dof))
        d = self.d
        for n, M in zip(self.nodes, self.mats):
            B[n * d:(n + 1) * d, n * d:(n + 1) * d] += M
        return B


@dataclass(eq=False)
class SecondOrderSystem:
    """``G u_tt + B u_t + A u = f`` with diagonal ``G`` and matrix-free ``A``.

    ``apply_A`` maps a dof vector to ``A u`` (``A`` symmetric positive
    semidefinite).  ``rhs(t)`` returns ``f`` at time ``t`` or ``None`` for no
    forcing.  ``null_space`` lists vectors spanning the kernel of ``A`` that are
    deflated when estimating ``lambda_max``.
    """

    g_diag: np.ndarray
    apply_A: Callable
    b_diag: Optional[np.ndarray] = None
    b_blocks: Optional[BlockDamping] = None
    rhs: Optional[Callable] = None
    null_space: tuple = ()
    forcing_scale: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.g_diag = np.asarray(self.g_diag, dtype=float)
        if np.any(~np.isfinite(self.g_diag)) or np.any(self.g_diag <= 0):
            raise ValueError("G must have positive finite diagonal entries")
        if self.b_diag is not None:
            self.b_diag = np.asarray(self.b_diag, dtype=float)
            if self.b_diag.shape != self.g_diag.shape:
                raise ValueError("B diagonal size mismatch")
            if np.any(self.b_diag < 0):
                raise ValueError("B must be nonnegative")
            if not np.any(self.b_diag):
                self.b_diag = None

    @property
    def dof(self):
        return self.g_diag.size

    @property
    def damped(self):
        return self.b_diag is not None or self.b_blocks is not None

    def apply_B(self, v):
        out = np.zeros_like(v)
        if self.b_diag is not None:
            out += self.b_diag * v
        if self.b_blocks is not None:
            self.b_blocks.apply(v, out)
        return out


@dataclass
class StepperState:
    u_curr: np.ndarray
    u_prev: np.ndarray
    step_index: int
    dt: float
    epsilon: float = DEFAULT_EPSILON

    @property
    def time(self):
        return self.step_index * self.dt


def stable_dt(lambda_max, epsilon=DEFAULT_EPSILON):
    """``tau = 2 / sqrt((1 + eps) lambda_max)``."""
    if not lambda_max > 0:
        raise ValueError(f"lambda_max must be positive, got {lambda_max}")
    if not epsilon >= 0:
        raise ValueError(f"epsilon must be nonnegative, got {epsilon}")
    return 2.0 / np.sqrt((1.0 + epsilon) * lambda_max)


def _deflation_basis(sys):
    """Orthonormal basis of ``G^{1/2} N`` for the null vectors ``N``."""
    if not len(sys.null_space):
        return None
    s = np.sqrt(sys.g_diag)
    V = np.stack([s * np.asarray(v, dtype=float) for v in sys.null_space], axis=1)
    Qm, _ = np.linalg.qr(V)
    return Qm


def lambda_max(sys, rel_tol=1e-6, max_iter=None, seed=20240531, method="power"):
    """Largest generalized eigenvalue of ``(A, G)``.

    ``method="power"`` runs power iteration on ``G^{-1/2} A G^{-1/2}`` from a
    seeded random start vector, deflating ``sys.null_space``; convergence is
    declared when the Rayleigh quotient changes by less than ``rel_tol``
    (relative) over 10 consecutive iterations.  ``method="lanczos"`` uses
    ARPACK on the same symmetric operator.
    """
    n = sys.dof
    gm12 = 1.0 / np.sqrt(sys.g_diag)
    Qn = _deflation_basis(sys)

    def deflate(y):
        if Qn is not None:
            y = y - Qn @ (Qn.T @ y)
        return y

    def op(y):
        return deflate(gm12 * sys.apply_A(gm12 * deflate(y)))

    if method == "lanczos":
        from scipy.sparse.linalg import LinearOperator, eigsh

        rng = np.random.Generator(np.random.PCG64(seed))
        lo = LinearOperator((n, n), matvec=op, dtype=float)
        vals = eigsh(lo, k=1, which="LA", tol=rel_tol * 1e-2, v0=deflate(rng.standard_normal(n)),
                     return_eigenvectors=False)
        return float(vals[-1])
    if method != "power":
        raise ValueError(f"unknown method {method!r}")

    if max_iter is None:
        max_iter = min(max(10 * n, 5000), 100_000)
    rng = np.random.Generator(np.random.PCG64(seed))
    y = deflate(rng.standard_normal(n))
    y /= np.linalg.norm(y)
    lam_old = None
    stable = 0
    for it in range(max_iter):
        z = op(y)
        lam = float(y @ z)
        nz = np.linalg.norm(z)
        if nz == 0.0:
            return 0.0
        y = z / nz
        if lam_old is not None and abs(lam - lam_old) <= rel_tol * abs(lam):
            stable += 1
            if stable >= 10:
                log.debug("power iteration converged in %d iterations: %g", it + 1, lam)
                return lam
        else:
            stable = 0
        lam_old = lam
    raise ConvergenceError(f"power iteration did not converge in {max_iter} iterations")


def ricker(t, nu0, delay=None):
    """Ricker wavelet ``(1 - 2 pi^2 nu0^2 s^2) exp(-pi^2 nu0^2 s^2)`` with ``s = t - delay``.

    The default delay is ``1.6 / nu0`` so that the wavelet is below 1e-9 at ``t = 0``.
    """
    if delay is None:
        delay = RICKER_DELAY_CYCLES / nu0
    a = (np.pi * nu0 * (np.asarray(t, dtype=float) - delay)) ** 2
    return (1.0 - 2.0 * a) * np.exp(-a)


def zero_state(sys, dt, epsilon=DEFAULT_EPSILON):
    return StepperState(np.zeros(sys.dof), np.zeros(sys.dof), 1, float(dt), epsilon)


class Stepper:
    """Preallocated central-difference integrator for one system and time step.

    Time level ``k`` sits at ``t_k = k * dt``.  The default start is
    ``u^0 = u^1 = 0`` at ``k = 1``.
    """

    def __init__(self, sys, dt, state=None, guard=True):
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.sys = sys
        self.dt = float(dt)
        self.state = state if state is not None else zero_state(sys, dt)
        self.guard = guard
        tau2 = self.dt ** 2
        g = sys.g_diag
        self._g2 = 2.0 * g / tau2
        self._g1 = g / tau2
        self._bd = sys.b_diag
        if sys.b_diag is not None:
            self._left = g / tau2 + sys.b_diag / (2 * self.dt)
        else:
            self._left = g / tau2
        self._inv_left = 1.0 / self._left
        self._blocks = None
        if sys.b_blocks is not None:
            bb = sys.b_blocks
            d = bb.d
            idx = bb.nodes[:, None] * d + np.arange(d)[None, :]
            Lb = np.zeros((len(bb.nodes), d, d))
            Lb[:, np.arange(d), np.arange(d)] = self._left[idx]
            Lb += bb.mats / (2 * self.dt)
            self._blocks = (idx, np.linalg.inv(Lb), bb)
        u0 = np.max(np.abs(self.state.u_curr)) if sys.dof else 0.0
        self._scale = max(float(u0), float(sys.forcing_scale) * tau2 / float(np.min(g)))

    def _rhs(self, k):
        f = self.sys.rhs(k * self.dt) if self.sys.rhs is not None else None
        return f

    def step(self):
        st = self.state
        u, um = st.u_curr, st.u_prev
        r = self._g2 * u - self.sys.apply_A(u)
        f = self._rhs(st.step_index)
        if f is not None:
            r += f
            if self.guard:
                fs = float(np.max(np.abs(f))) * self.dt ** 2 / float(np.min(self.sys.g_diag))
                if fs > self._scale:
                    self._scale = fs
        if self._bd is not None or self._blocks is not None:
            # -(G/tau^2 - B/(2 tau)) u-  ==  -G/tau^2 u- + B u-/(2 tau)
            r -= self._g1 * um
            r += self.sys.apply_B(um) / (2 * self.dt)
        else:
            r -= self._g1 * um
        if self._blocks is None:
            unew = r * self._inv_left
        else:
            idx, inv, bb = self._blocks
            unew = r * self._inv_left
            unew[idx] = np.einsum("mij,mj->mi", inv, r[idx])
        if self.guard:
            self._check(unew, st.step_index + 1)
        self.state = StepperState(unew, u, st.step_index + 1, st.dt, st.epsilon)
        return self.state

    def _check(self, u, k):
        m = float(np.max(np.abs(u))) if u.size else 0.0
        if not np.isfinite(m):
            raise InstabilityError(f"non-finite state at step {k}")
        limit = GUARD_FACTOR * self._scale
        if self._scale > 0 and m > limit:
            raise InstabilityError(f"|u| = {m:.3e} exceeds guard {limit:.3e} at step {k}")

    def run(self, n_steps, callback=None):
        for _ in range(int(n_steps)):
            self.step()
            if callback is not None:
                callback(self.state)
        return self.state


def step(sys, state):
    """Advance one step and return the new :class:`StepperState`."""
    return Stepper(sys, state.dt, state).step()


def integrate(sys, dt, n_steps, state=None, callback=None, guard=True):
    """Run ``n_steps`` steps from ``state`` (zero data by default); returns the final state."""
    return Stepper(sys, dt, state, guard=guard).run(n_steps, callback)


def discrete_energy(sys, state):
    """Leapfrog-compatible energy ``0.5 |(u - u-)/tau|_G^2 + 0.5 (A u, u-)``."""
    u, um, tau = state.u_curr, state.u_prev, state.dt
    v = (u - um) / tau
    return 0.5 * float(v @ (sys.g_diag * v)) + 0.5 * float(sys.apply_A(u) @ um)


def with_initial(state, u_curr, u_prev):
    return replace(state, u_curr=np.asarray(u_curr, float).copy(), u_prev=np.asarray(u_prev, float).copy())
