"""Semidiscrete 1D wave equation ``rho u_tt - (rho c^2 u_x)_x = f``.

Every problem is assembled through :func:`assemble_system`, which chains one
or more blocks that share their end nodes, adds the boundary terms at the two
outer ends and returns a :class:`~elastowave.timestepping.SecondOrderSystem`
for the unknown (non-Dirichlet) nodes:

* interior operator ``L = (H D- - Q) P C^2 D+ = -(D+)^T H P C^2 D+``;
* Dirichlet ends are projected out, their data enter the forcing as a lift;
* Robin ends (``u_x + b u = a``) add ``-b Q P C^2`` to ``-L`` and ``Q P C^2 a``
  to the forcing;
* non-reflecting ends (``u_t + b u_x = 0``) add the damping ``b^-1 Q P C^2``;
* at a shared node the two one-sided equations are summed.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sps

from . import sbp
from .timestepping import SecondOrderSystem, ricker


# --------------------------------------------------------------------------
# data types


@dataclass(frozen=True, eq=False)
class Medium1D:
    rho: np.ndarray
    speed: np.ndarray

    def __post_init__(self):
        rho = np.atleast_1d(np.asarray(self.rho, dtype=float))
        c = np.atleast_1d(np.asarray(self.speed, dtype=float))
        if rho.shape != c.shape:
            raise ValueError("rho and speed must have the same shape")
        for name, v in (("rho", rho), ("speed", c)):
            if not (np.all(np.isfinite(v)) and np.all(v > 0)):
                raise ValueError(f"{name} must be positive and finite")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "speed", c)

    @classmethod
    def uniform(cls, n, rho=1.0, speed=1.0):
        return cls(np.full(n, float(rho)), np.full(n, float(speed)))

    @property
    def modulus(self):
        return self.rho * self.speed ** 2

    @property
    def impedance(self):
        return self.rho * self.speed


def _const(value):
    if callable(value):
        return value
    v = float(value)
    return lambda t: v


@dataclass(frozen=True)
class Dirichlet:
    a: Callable = 0.0

    def data(self, t):
        return _const(self.a)(t)


@dataclass(frozen=True)
class Robin:
    """``u_x + b u = a``; ``b = 0`` is the Neumann condition."""

    b: float = 0.0
    a: Callable = 0.0

    def data(self, t):
        return _const(self.a)(t)


@dataclass(frozen=True)
class NonReflecting:
    """``u_t + b u_x = 0``; ``b = -c`` on the left and ``b = +c`` on the right absorb normally incident waves."""

    b: float = 1.0


def Neumann(a=0.0):
    return Robin(0.0, a)


@dataclass(frozen=True)
class BoundarySpec1D:
    left: object
    right: object

    def __post_init__(self):
        for side, bc in (("left", self.left), ("right", self.right)):
            if isinstance(bc, Robin):
                if callable(bc.b):
                    raise TypeError("Robin coefficient b must be a constant")
                if side == "left" and bc.b > 0:
                    raise ValueError(f"Robin condition requires b_L <= 0, got {bc.b}")
                if side == "right" and bc.b < 0:
                    raise ValueError(f"Robin condition requires b_R >= 0, got {bc.b}")
            elif isinstance(bc, NonReflecting):
                if bc.b == 0:
                    raise ValueError("non-reflecting condition needs b != 0")
                if side == "left" and bc.b > 0:
                    raise ValueError(f"non-reflecting condition requires b_L < 0, got {bc.b}")
                if side == "right" and bc.b < 0:
                    raise ValueError(f"non-reflecting condition requires b_R > 0, got {bc.b}")
            elif not isinstance(bc, Dirichlet):
                raise TypeError(f"unsupported boundary condition {bc!r}")


@dataclass(eq=False)
class Wave1DProblem:
    """One block: triplet, medium, boundary conditions and forcing ``f(t)`` (per node)."""

    triplet: sbp.OperatorTriplet
    medium: Medium1D
    bcs: BoundarySpec1D = None
    forcing: Optional[Callable] = None

    def __post_init__(self):
        if self.medium.rho.size != self.triplet.n_nodes:
            raise ValueError(
                f"medium has {self.medium.rho.size} nodes but the triplet has {self.triplet.n_nodes}"
            )

    @property
    def operator(self):
        return assemble_interior(self.triplet, self.medium)


# --------------------------------------------------------------------------
# interior operator


@dataclass(frozen=True, eq=False)
class InteriorOperator:
    """``L u = H D- (rho c^2 D+ u) - Q (rho c^2 D+ u)``, applied matrix-free."""

    triplet: sbp.OperatorTriplet
    medium: Medium1D

    def __call__(self, u):
        t = self.triplet
        u = np.asarray(u, dtype=float)
        if u.shape != (t.n_nodes,):
            raise ValueError(f"expected a vector of length {t.n_nodes}, got shape {u.shape}")
        w = t.d_plus @ u
        w *= self.medium.modulus
        return t.h_weights * (t.d_minus @ w) - t.q_signature * w

    def matrix(self):
        t = self.triplet
        Dp = sps.csr_matrix(t.d_plus)
        Dm = sps.csr_matrix(t.d_minus)
        left = sps.diags(t.h_weights) @ Dm - sps.diags(t.q_signature)
        return (left @ sps.diags(self.medium.modulus) @ Dp).tocsr()


def assemble_interior(triplet, medium):
    if medium.rho.size != triplet.n_nodes:
        raise ValueError("medium and triplet sizes differ")
    return InteriorOperator(triplet, medium)


# --------------------------------------------------------------------------
# general assembly


@dataclass(eq=False)
class Wave1DSystem:
    """Assembled system plus the bookkeeping to recover full nodal solutions."""

    system: SecondOrderSystem
    x: np.ndarray
    free: np.ndarray
    dirichlet_nodes: dict
    A_full: sps.csr_matrix
    A_free: sps.csr_matrix
    offsets: list

    def full(self, u_free, t):
        out = np.zeros(self.x.size)
        out[self.free] = u_free
        for node, bc in self.dirichlet_nodes.items():
            out[node] = bc.data(t)
        return out

    sizes: list = field(default_factory=list)

    def block_slice(self, b):
        return slice(self.offsets[b], self.offsets[b] + self.sizes[b])


def assemble_system(problems, left_bc, right_bc, interface_tol=1e-12):
    """Chain ``problems`` (sharing end nodes) and impose the outer boundary conditions."""
    BoundarySpec1D(left_bc, right_bc)  # validates signs
    problems = list(problems)
    # global numbering: block b node i -> offsets[b] + i
    offsets, n = [], 0
    for b, pb in enumerate(problems):
        if b > 0:
            prev = problems[b - 1].triplet.nodes[-1]
            here = pb.triplet.nodes[0]
            if abs(prev - here) > interface_tol * max(1.0, abs(prev)):
                raise ValueError(f"interface coordinates differ: {prev} vs {here}")
            n -= 1
        offsets.append(n)
        n += pb.triplet.n_nodes
    x = np.zeros(n)
    gdiag = np.zeros(n)
    mod_end = {}
    blocks = []
    for b, pb in enumerate(problems):
        t = pb.triplet
        sl = slice(offsets[b], offsets[b] + t.n_nodes)
        x[sl] = t.nodes
        gdiag[sl] += t.h_weights * pb.medium.rho
        L = assemble_interior(t, pb.medium).matrix().tocoo()
        blocks.append(sps.csr_matrix((-L.data, (L.row + offsets[b], L.col + offsets[b])), shape=(n, n)))
    A_full = sum(blocks[1:], blocks[0]).tocsr()
    mod_end[0] = problems[0].medium.modulus[0]
    mod_end[n - 1] = problems[-1].medium.modulus[-1]
    qsig = {0: -1.0, n - 1: 1.0}

    bdiag = np.zeros(n)
    robin_data = []
    dirichlet = {}
    add = sps.lil_matrix((n, n))
    for node, bc in ((0, left_bc), (n - 1, right_bc)):
        if isinstance(bc, Robin):
            add[node, node] = bc.b * qsig[node] * mod_end[node]
            robin_data.append((node, bc, qsig[node] * mod_end[node]))
        elif isinstance(bc, NonReflecting):
            bdiag[node] = qsig[node] * mod_end[node] / bc.b
        else:
            dirichlet[node] = bc
    A_full = (A_full + add.tocsr()).tocsr()
    free = np.array([i for i in range(n) if i not in dirichlet], dtype=np.int64)
    A_free = A_full[free][:, free].tocsr()
    A_lift = A_full[free].tocsr()

    def forcing(t):
        f = np.zeros(n)
        have = False
        for b, pb in enumerate(problems):
            if pb.forcing is None:
                continue
            fb = pb.forcing(t)
            if fb is None:
                continue
            f[offsets[b]:offsets[b] + pb.triplet.n_nodes] += pb.triplet.h_weights * np.asarray(fb, float)
            have = True
        for node, bc, coef in robin_data:
            a = bc.data(t)
            if a != 0.0:
                f[node] += coef * a
                have = True
        out = f[free]
        if dirichlet:
            d = np.zeros(n)
            for node, bc in dirichlet.items():
                d[node] = bc.data(t)
            if np.any(d):
                out = out - A_lift @ d
                have = True
        return out if have else None

    system = SecondOrderSystem(
        g_diag=gdiag[free],
        apply_A=A_free.__matmul__,
        b_diag=bdiag[free] if np.any(bdiag) else None,
        rhs=forcing,
        null_space=(),
    )
    anchored = dirichlet or any(isinstance(bc, Robin) and bc.b != 0 for bc in (left_bc, right_bc))
    if not anchored:
        # Neumann / non-reflecting ends: constants are in the kernel of A
        system.null_space = (np.ones(free.size),)
    return Wave1DSystem(system, x, free, dirichlet, A_full, A_free, offsets,
                        [pb.triplet.n_nodes for pb in problems])


def _single(problem, kind):
    bcs = problem.bcs
    if bcs is None:
        raise ValueError("problem has no boundary conditions")
    for bc in (bcs.left, bcs.right):
        if not isinstance(bc, kind):
            raise ValueError(f"expected {kind.__name__} conditions at both ends, got {bc!r}")


def dirichlet_problem(problem, a_L=0.0, a_R=0.0):
    """Dirichlet data at both ends (unknowns restricted to interior nodes)."""
    return assemble_system([problem], Dirichlet(a_L), Dirichlet(a_R))


def robin_problem(problem, b=(0.0, 0.0), a=(0.0, 0.0)):
    """``u_x + b u = a`` at both ends; ``b = (b_L, b_R)``, ``a = (a_L, a_R)``."""
    return assemble_system([problem], Robin(b[0], a[0]), Robin(b[1], a[1]))


def nonreflecting_problem(problem, b_L=-1.0, b_R=1.0):
    return assemble_system([problem], NonReflecting(b_L), NonReflecting(b_R))


def couple_two_blocks(left, right, left_bc=None, right_bc=None):
    """Two blocks joined at a shared node; outer ends take the blocks' own conditions."""
    lb = left_bc if left_bc is not None else (left.bcs.left if left.bcs else Dirichlet(0.0))
    rb = right_bc if right_bc is not None else (right.bcs.right if right.bcs else Dirichlet(0.0))
    return assemble_system([left, right], lb, rb)


def system_for(problem):
    """Assemble a single-block problem from its own ``bcs``."""
    return assemble_system([problem], problem.bcs.left, problem.bcs.right)


# --------------------------------------------------------------------------
# sources and the saw-tooth diagnostic


def point_source(triplet, node_index, wavelet):
    """Forcing ``delta_h(x_n) g(t)`` at the 1-based ``node_index``."""
    delta = sbp.discrete_delta(triplet, node_index)
    return lambda t: delta * wavelet(t)


def gaussian_source(triplet, center, width, wavelet):
    """Smooth spatial source ``exp(-((x - center)/width)^2) g(t)`` normalised to unit mass."""
    shape = np.exp(-(((triplet.nodes - center) / width) ** 2))
    shape /= triplet.h_weights @ shape
    return lambda t: shape * wavelet(t)


def sawtooth_metric(u, x, front_position, spacing, p=4, source=0.0):
    """Largest ``|u|`` ahead of the causal front (``|x - source| > x_f + 2 p h``) over ``max |u|``."""
    u = np.asarray(u, dtype=float)
    x = np.asarray(x, dtype=float)
    reach = front_position + 2 * p * spacing
    dist = np.abs(x - source)
    if front_position < 0 or reach >= dist.max():
        raise ValueError(f"front {front_position} (+{2 * p * spacing}) lies outside the domain")
    peak = np.max(np.abs(u))
    if peak == 0:
        return 0.0
    return float(np.max(np.abs(u[dist > reach])) / peak)


@dataclass
class SawtoothResult:
    metric: float
    u: np.ndarray
    x: np.ndarray
    time: float
    front: float
    meta: dict = field(default_factory=dict)


def run_sawtooth(kind="shifted", p=4, n_nodes=2001, nu0=5.0, t_end=0.8, source="point",
                 width=0.02, epsilon=0.1):
    """Point (or smooth) source at x=0 on [-1, 1], rho=c=1, zero Dirichlet ends.

    The front position is ``c t`` (the delayed wavelet is below 1e-9 at t=0).
    """
    from .timestepping import Stepper, lambda_max, stable_dt

    if n_nodes % 2 == 0:
        raise ValueError("n_nodes must be odd so that x=0 is a grid node")
    h = 2.0 / (n_nodes - 1)
    trip = sbp.build_triplet(kind, n_nodes, p=p, a=-1.0, spacing=h)
    med = Medium1D.uniform(n_nodes)
    g = lambda t: ricker(t, nu0)
    if source == "point":
        f = point_source(trip, (n_nodes + 1) // 2, g)
    elif source == "gaussian":
        f = gaussian_source(trip, 0.0, width, g)
    else:
        raise ValueError(f"unknown source {source!r}")
    prob = Wave1DProblem(trip, med, BoundarySpec1D(Dirichlet(0.0), Dirichlet(0.0)), f)
    ws = system_for(prob)
    lam = lambda_max(ws.system)
    dt = stable_dt(lam, epsilon)
    nsteps = int(np.ceil(t_end / dt))
    dt = t_end / nsteps
    st = Stepper(ws.system, dt)
    # stepper starts at level 1 (t = dt); run to level nsteps
    st.run(nsteps - 1)
    u = ws.full(st.state.u_curr, t_end)
    front = 1.0 * t_end
    m = sawtooth_metric(u, ws.x, front, h, p)
    return SawtoothResult(m, u, ws.x, t_end, front, {"dt": dt, "lambda_max": lam, "steps": nsteps})
