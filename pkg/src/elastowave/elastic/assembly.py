"""Multiblock curvilinear semidiscretization of the Navier wave equation.

Each block carries a tensor-product triplet per parametric axis, a mapping,
density and stiffness per node, and one condition per face.  The spatial
operator of a block is evaluated by the factored pipeline

    g_k   = D_k^+ u                       (per axis, per component)
    sigma = C eps(T g)                    (pointwise)
    F_k   = W J T_kj sigma_ij             (pointwise; W = tensor-product H)
    E u   = sum_k (H D_k^- - Q_k) H^-1 F_k  = -sum_k (D_k^+)^T F_k

so that ``A = -E`` is symmetric positive semidefinite and the traction-free
condition is the natural (weak) one.  Blocks are glued by merging coincident
interface nodes and summing the one-sided operators, masses and forcings.
All fields are node-major ``u[..., i]``; the assembled vector is the flattened
``(n_global_nodes, d)`` array.
"""
from dataclasses import dataclass, field
import logging

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .. import kernels
from ..geometry import FACE_NAMES, face_axis_side
from ..timestepping import BlockDamping, SecondOrderSystem
from .stiffness import check_positive_definite, impedance_matrix, plane_strain

log = logging.getLogger(__name__)


class InterfaceError(ValueError):
    """Raised when an interface violates node coincidence or metric/triplet matching."""


# --------------------------------------------------------------------------
# face conditions


@dataclass(frozen=True)
class FreeSurface:
    kind = "free_surface"


@dataclass(frozen=True)
class DirichletFace:
    """Prescribed displacement; ``value`` is a constant vector or ``value(t, x) -> (m, d)``."""

    value: object = None
    kind = "dirichlet"

    def evaluate(self, t, x, d):
        if self.value is None:
            return np.zeros((len(x), d))
        if callable(self.value):
            return np.broadcast_to(np.asarray(self.value(t, x), float), (len(x), d))
        return np.broadcast_to(np.asarray(self.value, float), (len(x), d))

    @property
    def homogeneous(self):
        return self.value is None or (not callable(self.value) and not np.any(self.value))


@dataclass(frozen=True)
class NonReflectingFace:
    kind = "nonreflecting"


@dataclass(frozen=True)
class InterfaceFace:
    peer: int
    peer_face: str
    kind = "interface"


_BY_NAME = {"free_surface": FreeSurface, "free": FreeSurface, "dirichlet": DirichletFace,
            "nonreflecting": NonReflectingFace, "non_reflecting": NonReflectingFace}


def face_condition(spec):
    """Coerce ``"free_surface"``/``"dirichlet"``/``"nonreflecting"`` or an instance."""
    if isinstance(spec, (FreeSurface, DirichletFace, NonReflectingFace, InterfaceFace)):
        return spec
    if isinstance(spec, str) and spec in _BY_NAME:
        return _BY_NAME[spec]()
    raise ValueError(f"unknown face condition {spec!r}")


# --------------------------------------------------------------------------
# blocks


def _tensor_weights(triplets):
    W = np.ones(())
    for t in triplets:
        W = np.multiply.outer(W, t.h_weights)
    return W


def _face_slice(dims, axis, side):
    idx = [slice(None)] * len(dims)
    idx[axis] = 0 if side < 0 else dims[axis] - 1
    return tuple(idx)


@dataclass(eq=False)
class ElasticBlock:
    """One logically rectangular block.

    ``rho`` is a scalar or per-node array; ``stiffness`` is one Voigt matrix or
    per-node matrices ``(*dims, nv, nv)`` (``nv = 3`` in 2D, 6 in 3D; a 6x6
    matrix given to a 2D block is reduced to plane strain).  Missing faces
    default to free surface.
    """

    grid: object
    rho: object
    stiffness: object
    faces: dict = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        d = self.grid.dim
        if d not in (2, 3):
            raise ValueError("elastic blocks are 2D or 3D")
        dims = self.grid.dims
        faces = {}
        for f, c in dict(self.faces).items():
            if f not in FACE_NAMES[:2 * d]:
                raise ValueError(f"face {f!r} does not exist in {d}D")
            faces[f] = face_condition(c)
        for f in FACE_NAMES[:2 * d]:
            faces.setdefault(f, FreeSurface())
        self.faces = faces

        self.metric = self.grid.metrics()
        self.rho = np.broadcast_to(np.asarray(self.rho, float), dims).copy()
        if np.any(self.rho <= 0):
            raise ValueError("density must be positive")
        C = np.asarray(self.stiffness, float)
        nv = 3 if d == 2 else 6
        if C.shape[-1] == 6 and d == 2:
            C = plane_strain(C) if C.ndim == 2 else C[..., [0, 1, 5], :][..., [0, 1, 5]]
        if C.shape[-2:] != (nv, nv):
            raise ValueError(f"stiffness must be {nv}x{nv} Voigt matrices")
        if C.ndim == 2:
            check_positive_definite(C)
            C = np.broadcast_to(C, dims + (nv, nv))
        else:
            if C.shape[:-2] != dims:
                raise ValueError("per-node stiffness shape does not match the grid")
            check_positive_definite(C)
        self.stiffness = np.ascontiguousarray(C)

        W = _tensor_weights(self.grid.triplets)
        self.W = W
        J = self.metric.J
        self.JW = np.ascontiguousarray((J * W).ravel())
        self.T = np.ascontiguousarray(self.metric.T.reshape(-1, d, d))
        self.C = np.ascontiguousarray(self.stiffness.reshape(-1, nv, nv))
        self.mass = (W * J * self.rho).ravel()
        self.plus = [t.plus_op for t in self.grid.triplets]
        self.div = [t.div_op for t in self.grid.triplets]
        self._g = np.empty((d,) + dims + (d,))
        self._F = np.empty((d,) + dims + (d,))

    @property
    def dims(self):
        return self.grid.dims

    @property
    def d(self):
        return self.grid.dim

    @property
    def npts(self):
        return int(np.prod(self.dims))

    @property
    def x(self):
        return self.grid.x

    def face_nodes(self, face):
        """Flat local indices of the nodes on ``face``."""
        axis, side = face_axis_side(face)
        idx = np.arange(self.npts).reshape(self.dims)
        return idx[_face_slice(self.dims, axis, side)].ravel()

    def apply_E(self, u, out=None):
        """``E u`` for a block field ``u`` of shape ``(*dims, d)``."""
        d = self.d
        u = np.ascontiguousarray(u, dtype=float).reshape(self.dims + (d,))
        g, F = self._g, self._F
        for k in range(d):
            kernels.axis_apply(self.plus[k], u, k, out=g[k])
        npts = self.npts
        kernels.stress_flux(g.reshape(d, npts, d), self.T, self.JW, self.C, out=F.reshape(d, npts, d))
        if out is None:
            out = np.zeros(self.dims + (d,))
        else:
            out[...] = 0.0
        for k in range(d):
            kernels.axis_apply(self.div[k], F[k], k, out=out, accumulate=True)
        return out

    def surface_weights(self, face):
        """``W_tangential * J * |T_(k)|`` on ``face``: the discrete surface element."""
        axis, side = face_axis_side(face)
        sl = _face_slice(self.dims, axis, side)
        t = self.grid.triplets[axis]
        h_end = t.h_weights[0 if side < 0 else -1]
        Wt = self.W[sl] / h_end
        Tn = np.abs(self.metric.face_row_norm(axis, side))
        return Wt * self.metric.J[sl] * Tn

    def nonreflecting_matrix(self, face, floor=1e-12):
        """Per-node damping ``W_t J |T_(k)| (rho S)^{1/2}`` on ``face``: ``(m, d, d)``.

        ``S = N C N^T`` is the Christoffel matrix for the outward unit normal.
        """
        axis, side = face_axis_side(face)
        sl = _face_slice(self.dims, axis, side)
        nu = self.metric.face_normal(axis, side)
        Z = impedance_matrix(self.stiffness[sl], self.rho[sl], nu, floor=floor)
        return (self.surface_weights(face)[..., None, None] * Z).reshape(-1, self.d, self.d)


# --------------------------------------------------------------------------
# assembly


@dataclass(frozen=True)
class InterfacePair:
    block_a: int
    face_a: str
    block_b: int
    face_b: str
    nodes_a: np.ndarray
    nodes_b: np.ndarray


class ElasticAssembly:
    """Global multiblock operator with merged interface nodes.

    ``gids[b]`` maps the flat local nodes of block ``b`` to global node ids.
    """

    def __init__(self, blocks, tol=1e-8):
        self.blocks = list(blocks)
        if not self.blocks:
            raise ValueError("no blocks")
        d = self.blocks[0].d
        if any(b.d != d for b in self.blocks):
            raise ValueError("all blocks must have the same dimension")
        self.d = d
        self.tol = tol
        self._number_nodes(self._interface_pairs())
        self._validate_interfaces()
        self.mass = np.zeros(self.n_nodes)
        for b, g in zip(self.blocks, self.gids):
            np.add.at(self.mass, g, b.mass)
        self.x = np.zeros((self.n_nodes, d))
        for b, g in zip(self.blocks, self.gids):
            self.x[g] = b.x.reshape(-1, d)
        self._dirichlet = self._dirichlet_nodes()
        self.free = np.ones(self.n_nodes, bool)
        self.free[self._dirichlet] = False

    # ---- topology

    def _interface_pairs(self):
        pairs = []
        for ib, blk in enumerate(self.blocks):
            for f, c in blk.faces.items():
                if c.kind != "interface":
                    continue
                if not 0 <= c.peer < len(self.blocks) or c.peer == ib and c.peer_face == f:
                    raise InterfaceError(f"block {ib} face {f}: invalid peer {c.peer}:{c.peer_face}")
                back = self.blocks[c.peer].faces.get(c.peer_face)
                if not (back is not None and back.kind == "interface" and back.peer == ib and back.peer_face == f):
                    raise InterfaceError(
                        f"interface pairing is not reciprocal: block {ib} face {f} -> "
                        f"block {c.peer} face {c.peer_face}")
                if (ib, f) < (c.peer, c.peer_face):
                    pairs.append((ib, f, c.peer, c.peer_face))
        return pairs

    def _number_nodes(self, raw_pairs):
        offsets = np.cumsum([0] + [b.npts for b in self.blocks])
        n_local = int(offsets[-1])
        scale = max(float(np.ptp(np.concatenate([b.x.reshape(-1, self.d) for b in self.blocks]), axis=0).max()), 1e-300)
        rows, cols, out = [], [], []
        for ia, fa, ib, fb in raw_pairs:
            A, B = self.blocks[ia], self.blocks[ib]
            na, nb = A.face_nodes(fa), B.face_nodes(fb)
            xa, xb = A.x.reshape(-1, self.d)[na], B.x.reshape(-1, self.d)[nb]
            if len(na) != len(nb):
                raise InterfaceError(f"block {ia} {fa} and block {ib} {fb} have {len(na)} vs {len(nb)} nodes")
            dist, j = cKDTree(xb).query(xa)
            if np.any(dist > self.tol * scale) or len(np.unique(j)) != len(j):
                raise InterfaceError(
                    f"nodes of block {ia} {fa} and block {ib} {fb} do not coincide "
                    f"(max mismatch {dist.max():.3e})")
            rows.append(offsets[ia] + na)
            cols.append(offsets[ib] + nb[j])
            out.append(InterfacePair(ia, fa, ib, fb, na, nb[j]))
        if rows:
            r, c = np.concatenate(rows), np.concatenate(cols)
            graph = coo_matrix((np.ones(len(r)), (r, c)), shape=(n_local, n_local))
            _, labels = connected_components(graph, directed=False)
            # number global nodes in order of first appearance
            _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
            order = np.argsort(np.argsort(first))
            glob = order[inv]
        else:
            glob = np.arange(n_local)
        self.gids = [np.ascontiguousarray(glob[offsets[i]:offsets[i + 1]]) for i in range(len(self.blocks))]
        self.n_nodes = int(glob.max()) + 1
        self.interfaces = out
        self._identity = len(self.blocks) == 1

    def _validate_interfaces(self):
        for pr in self.interfaces:
            A, B = self.blocks[pr.block_a], self.blocks[pr.block_b]
            wa = A.surface_weights(pr.face_a).ravel()
            wb = B.surface_weights(pr.face_b).ravel()
            # position of each face node inside the flattened face array
            pos_a = {n: i for i, n in enumerate(A.face_nodes(pr.face_a))}
            pos_b = {n: i for i, n in enumerate(B.face_nodes(pr.face_b))}
            ia = np.array([pos_a[n] for n in pr.nodes_a])
            ib = np.array([pos_b[n] for n in pr.nodes_b])
            if not np.allclose(wa[ia], wb[ib], rtol=1e-8, atol=0):
                raise InterfaceError(
                    f"tangential quadrature/metric mismatch between block {pr.block_a} {pr.face_a} "
                    f"and block {pr.block_b} {pr.face_b} (max rel "
                    f"{np.max(np.abs(wa[ia] - wb[ib]) / np.abs(wa[ia])):.3e})")

    def _dirichlet_nodes(self):
        nodes = []
        for b, g in zip(self.blocks, self.gids):
            for f, c in b.faces.items():
                if c.kind == "dirichlet":
                    nodes.append(g[b.face_nodes(f)])
        if not nodes:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(nodes))

    @property
    def has_dirichlet(self):
        return self._dirichlet.size > 0

    @property
    def dirichlet_nodes(self):
        return self._dirichlet

    @property
    def dof(self):
        return self.n_nodes * self.d

    # ---- operators

    def apply_E(self, U, out=None):
        """Global ``E U`` for a full field ``U`` of shape ``(n_nodes, d)`` (or flat)."""
        d = self.d
        U = np.asarray(U, float).reshape(self.n_nodes, d)
        if self._identity:
            r = self.blocks[0].apply_E(U)
            if out is None:
                return r.reshape(self.n_nodes, d)
            out[...] = r.reshape(self.n_nodes, d)
            return out
        if out is None:
            out = np.zeros((self.n_nodes, d))
        else:
            out[...] = 0.0
        for b, g in zip(self.blocks, self.gids):
            r = b.apply_E(U[g])
            kernels.scatter_add(out, g, r.reshape(-1, d))
        return out

    def apply_A(self, U):
        return -self.apply_E(U)

    def damping(self):
        """Summed non-reflecting blocks per global node: ``(nodes, mats)`` or ``None``."""
        d = self.d
        acc = {}
        for b, g in zip(self.blocks, self.gids):
            for f, c in b.faces.items():
                if c.kind != "nonreflecting":
                    continue
                nodes = g[b.face_nodes(f)]
                mats = b.nonreflecting_matrix(f)
                for n, M in zip(nodes, mats):
                    if n in acc:
                        acc[n] = acc[n] + M
                    else:
                        acc[n] = M.copy()
        if not acc:
            return None
        nodes = np.array(sorted(acc), dtype=np.int64)
        mats = np.stack([acc[n] for n in nodes]).reshape(-1, d, d)
        return nodes, mats

    def dirichlet_field(self, t):
        """Full ``(n_nodes, d)`` field holding the Dirichlet data at time ``t`` (zero elsewhere)."""
        U = np.zeros((self.n_nodes, self.d))
        for b, g in zip(self.blocks, self.gids):
            for f, c in b.faces.items():
                if c.kind == "dirichlet":
                    loc = b.face_nodes(f)
                    U[g[loc]] = c.evaluate(t, b.x.reshape(-1, self.d)[loc], self.d)
        return U

    @property
    def homogeneous_dirichlet(self):
        return all(c.homogeneous for b in self.blocks for c in b.faces.values() if c.kind == "dirichlet")

    def translations(self):
        d = self.d
        vs = []
        for c in range(d):
            v = np.zeros((self.n_nodes, d))
            v[:, c] = 1.0
            vs.append(v.ravel())
        return vs

    def system(self, forcing=None, forcing_scale=0.0):
        """Second-order system on the free dofs.

        ``forcing(t)`` returns a full ``(n_nodes, d)`` weighted forcing (already
        multiplied by ``H J``) or ``None``.  Dirichlet data enter through the
        lift ``-A_free,dir a(t)``.
        """
        d = self.d
        free = self.free
        g_diag = np.repeat(self.mass, d)
        damp = self.damping()
        if not self.has_dirichlet:
            apply_A = lambda v: self.apply_A(v).ravel()  # noqa: E731
            blocks = BlockDamping(*damp) if damp is not None else None
            rhs = None
            if forcing is not None:
                rhs = lambda t: np.asarray(forcing(t), float).ravel()  # noqa: E731
            null = tuple(self.translations())
            return SecondOrderSystem(g_diag, apply_A, b_blocks=blocks, rhs=rhs, null_space=null,
                                     forcing_scale=forcing_scale, meta={"assembly": self})

        free_nodes = np.flatnonzero(free)
        remap = -np.ones(self.n_nodes, dtype=np.int64)
        remap[free_nodes] = np.arange(free_nodes.size)
        n_free = free_nodes.size
        buf = np.zeros((self.n_nodes, d))

        def apply_A(v):
            buf[...] = 0.0
            buf[free_nodes] = v.reshape(n_free, d)
            return self.apply_A(buf)[free_nodes].ravel()

        blocks = None
        if damp is not None:
            nodes, mats = damp
            keep = free[nodes]
            if np.any(keep):
                blocks = BlockDamping(remap[nodes[keep]], mats[keep])
        lifted = not self.homogeneous_dirichlet

        rhs = None
        if forcing is not None or lifted:
            def rhs(t):
                r = np.zeros((n_free, d))
                if forcing is not None:
                    f = forcing(t)
                    if f is not None:
                        r += np.asarray(f, float).reshape(self.n_nodes, d)[free_nodes]
                if lifted:
                    r -= self.apply_A(self.dirichlet_field(t))[free_nodes]
                return r.ravel()

        g_free = g_diag.reshape(self.n_nodes, d)[free_nodes].ravel()
        return SecondOrderSystem(g_free, apply_A, b_blocks=blocks, rhs=rhs, null_space=(),
                                 forcing_scale=forcing_scale,
                                 meta={"assembly": self, "free_nodes": free_nodes})

    def full_field(self, v, t=0.0):
        """Expand a system vector to the full ``(n_nodes, d)`` field (Dirichlet data filled in)."""
        if not self.has_dirichlet:
            return np.asarray(v).reshape(self.n_nodes, self.d)
        U = self.dirichlet_field(t) if not self.homogeneous_dirichlet else np.zeros((self.n_nodes, self.d))
        U[self.free] = np.asarray(v).reshape(-1, self.d)
        return U

    def block_field(self, U, b):
        """View of the global field on block ``b`` as ``(*dims, d)``."""
        return np.asarray(U).reshape(self.n_nodes, self.d)[self.gids[b]].reshape(self.blocks[b].dims + (self.d,))

    def locate(self, point, block=None):
        """Nearest global node to a physical ``point``: ``(global_id, distance)``."""
        tree = self.__dict__.get("_tree")
        if tree is None:
            tree = self._tree = cKDTree(self.x)
        dist, i = tree.query(np.asarray(point, float))
        return int(i), float(dist)

    def global_id(self, block, index):
        """Global id of the node with multi-index ``index`` (0-based) in ``block``."""
        b = self.blocks[block]
        return int(self.gids[block][np.ravel_multi_index(tuple(index), b.dims)])


def assemble(blocks, tol=1e-8):
    """Build an :class:`ElasticAssembly`, merging nodes of every declared interface."""
    return ElasticAssembly(blocks, tol)
