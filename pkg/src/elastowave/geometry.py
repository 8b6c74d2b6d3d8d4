"""Coordinate mappings ``x(xi)`` with analytic Jacobians, and metric fields.

All mappings act on arrays of parametric points ``xi[..., d]`` and return
``x[..., d]``; ``jacobian(xi)[..., a, b] = dx_a / dxi_b``.  The metric field of a
block stores ``J = det(dx/dxi)`` and the inverse Jacobian
``T[..., k, j] = dxi_k / dx_j`` per node.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from . import sbp

FACE_NAMES = ("xmin", "xmax", "ymin", "ymax", "zmin", "zmax")


def face_axis_side(face):
    """``"ymax"`` -> ``(1, +1)``."""
    if face not in FACE_NAMES:
        raise ValueError(f"unknown face {face!r}; expected one of {FACE_NAMES}")
    i = FACE_NAMES.index(face)
    return i // 2, (-1 if i % 2 == 0 else 1)


def face_name(axis, side):
    return FACE_NAMES[2 * axis + (0 if side < 0 else 1)]


class Mapping:
    """Base class: subclasses implement ``forward`` and ``jacobian``."""

    dim = None

    def forward(self, xi):
        raise NotImplementedError

    def jacobian(self, xi):
        raise NotImplementedError

    def __call__(self, xi):
        return self.forward(xi)


@dataclass(frozen=True, eq=False)
class Affine(Mapping):
    """``x = A xi + b``."""

    matrix: np.ndarray
    offset: np.ndarray = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        object.__setattr__(self, "matrix", A)
        b = np.zeros(A.shape[0]) if self.offset is None else np.asarray(self.offset, dtype=float)
        object.__setattr__(self, "offset", b)

    @property
    def dim(self):
        return self.matrix.shape[0]

    def forward(self, xi):
        return np.asarray(xi, float) @ self.matrix.T + self.offset

    def jacobian(self, xi):
        xi = np.asarray(xi, float)
        return np.broadcast_to(self.matrix, xi.shape[:-1] + self.matrix.shape).copy()


def identity(d):
    return Affine(np.eye(d))


def scaling(factors):
    return Affine(np.diag(np.asarray(factors, dtype=float)))


def shear2d(alpha):
    """``x1 = xi1 + alpha xi2``, ``x2 = xi2``."""
    return Affine(np.array([[1.0, alpha], [0.0, 1.0]]))


def rotation2d(angle):
    c, s = np.cos(angle), np.sin(angle)
    return Affine(np.array([[c, -s], [s, c]]))


@dataclass(frozen=True, eq=False)
class Compose(Mapping):
    """``outer(inner(xi))``."""

    outer: Mapping
    inner: Mapping

    @property
    def dim(self):
        return self.inner.dim

    def forward(self, xi):
        return self.outer.forward(self.inner.forward(xi))

    def jacobian(self, xi):
        y = self.inner.forward(xi)
        return self.outer.jacobian(y) @ self.inner.jacobian(xi)


@dataclass(frozen=True, eq=False)
class ObliqueHalfPlane(Mapping):
    """Half-plane whose top face ``xi2 = top`` is a straight line inclined at ``angle``.

    ``mode="shear"``: ``x1 = xi1 cos(a)``, ``x2 = xi2 + xi1 sin(a) w(xi2)`` with
    ``w`` going linearly from 0 at ``xi2 = bottom`` to 1 at ``xi2 = top``, so the
    bottom face stays horizontal.  ``mode="rotation"``: a pure rotation.
    Arclength along the top face equals ``xi1``.
    """

    angle: float
    bottom: float = -1500.0
    top: float = 0.0
    mode: str = "shear"

    dim = 2

    def __post_init__(self):
        if not abs(self.angle) < np.pi / 4:
            raise ValueError(f"|angle| must be below 45 degrees, got {np.degrees(self.angle)}")
        if not self.top > self.bottom:
            raise ValueError("top must lie above bottom")
        if self.mode not in ("shear", "rotation"):
            raise ValueError(f"unknown mode {self.mode!r}")

    def _w(self, xi2):
        return (xi2 - self.bottom) / (self.top - self.bottom)

    def forward(self, xi):
        xi = np.asarray(xi, float)
        c, s = np.cos(self.angle), np.sin(self.angle)
        if self.mode == "rotation":
            return np.stack([c * xi[..., 0] - s * (xi[..., 1] - self.top),
                             s * xi[..., 0] + c * (xi[..., 1] - self.top) + self.top], axis=-1)
        x1 = xi[..., 0] * c
        x2 = xi[..., 1] + xi[..., 0] * s * self._w(xi[..., 1])
        return np.stack([x1, x2], axis=-1)

    def jacobian(self, xi):
        xi = np.asarray(xi, float)
        c, s = np.cos(self.angle), np.sin(self.angle)
        Jm = np.zeros(xi.shape[:-1] + (2, 2))
        if self.mode == "rotation":
            Jm[..., 0, 0], Jm[..., 0, 1], Jm[..., 1, 0], Jm[..., 1, 1] = c, -s, s, c
            return Jm
        Jm[..., 0, 0] = c
        Jm[..., 1, 0] = s * self._w(xi[..., 1])
        Jm[..., 1, 1] = 1.0 + xi[..., 0] * s / (self.top - self.bottom)
        return Jm

    def surface_point(self, arclength):
        """Physical point on the inclined top face at signed ``arclength`` from the origin."""
        return self.forward(np.array([arclength, self.top]))

    @property
    def surface_normal(self):
        """Outward unit normal of the top face."""
        return np.array([-np.sin(self.angle), np.cos(self.angle)])


def oblique_halfplane(angle, bottom=-1500.0, top=0.0, mode="shear", degrees=True):
    a = np.radians(angle) if degrees else float(angle)
    return ObliqueHalfPlane(a, bottom, top, mode)


# --------------------------------------------------------------------------
# 1D stretching


@dataclass(frozen=True, eq=False)
class Stretch1D:
    """Monotone reparameterisation ``phi: [0, 1] -> [0, 1]`` with ``phi' ∝ s``.

    ``s(u) = 1 - (1 - 1/strength) sum_c G_c(u) + (expansion - 1) sum_e G_e(u)``
    with Gaussian bumps ``G(u) = exp(-((u - u0)/width)^2)`` at the compressed
    locations ``interfaces`` and expanded locations ``open_ends``.
    """

    strength: float = 1.0
    width: float = 0.1
    interfaces: tuple = (0.0, 1.0)
    open_ends: tuple = ()
    expansion: float = 1.0
    axis: int = None

    def __post_init__(self):
        if not self.strength >= 1:
            raise ValueError("strength must be >= 1")
        if not self.width > 0:
            raise ValueError("width must be positive")
        if not self.expansion >= 1:
            raise ValueError("expansion must be >= 1")
        u = np.linspace(0.0, 1.0, 10001)
        if np.any(self._density(u) <= 0):
            raise ValueError("stretching density is not positive; reduce overlapping compressions")

    def _terms(self):
        out = [(c, -(1.0 - 1.0 / self.strength)) for c in self.interfaces]
        out += [(e, self.expansion - 1.0) for e in self.open_ends]
        return [(c, a) for c, a in out if a != 0.0]

    def _density(self, u):
        s = np.ones_like(np.asarray(u, float))
        for c, a in self._terms():
            s = s + a * np.exp(-(((u - c) / self.width) ** 2))
        return s

    def _primitive(self, u):
        u = np.asarray(u, float)
        val = u.copy()
        w = self.width
        for c, a in self._terms():
            val = val + a * w * np.sqrt(np.pi) / 2 * (erf((u - c) / w) - erf(-c / w))
        return val

    @property
    def _total(self):
        return float(self._primitive(np.array(1.0)))

    def value(self, u):
        return self._primitive(u) / self._total

    def deriv(self, u):
        return self._density(np.asarray(u, float)) / self._total


def boundary_stretching(axis, strength, width, interfaces=(0.0, 1.0), open_ends=(), expansion=1.0):
    return Stretch1D(float(strength), float(width), tuple(interfaces), tuple(open_ends), float(expansion), axis)


@dataclass(frozen=True, eq=False)
class AxisStretch:
    """Stretch applied to one coordinate on ``[lo, hi]``."""

    stretch: Stretch1D
    lo: float
    hi: float

    def value(self, t):
        L = self.hi - self.lo
        return self.lo + L * self.stretch.value((np.asarray(t, float) - self.lo) / L)

    def deriv(self, t):
        L = self.hi - self.lo
        return self.stretch.deriv((np.asarray(t, float) - self.lo) / L)


@dataclass(frozen=True, eq=False)
class TensorStretch(Mapping):
    """``x_k = phi_k(xi_k)`` per axis (``None`` leaves an axis unchanged)."""

    axes: tuple

    @property
    def dim(self):
        return len(self.axes)

    def forward(self, xi):
        xi = np.asarray(xi, float)
        out = xi.copy()
        for k, a in enumerate(self.axes):
            if a is not None:
                out[..., k] = a.value(xi[..., k])
        return out

    def jacobian(self, xi):
        xi = np.asarray(xi, float)
        Jm = np.zeros(xi.shape[:-1] + (self.dim, self.dim))
        for k, a in enumerate(self.axes):
            Jm[..., k, k] = 1.0 if a is None else a.deriv(xi[..., k])
        return Jm


# --------------------------------------------------------------------------
# surfaces and layered blocks


@dataclass(frozen=True, eq=False)
class FlatSurface:
    level: float

    def value(self, xh):
        return np.full(np.asarray(xh).shape[:-1], float(self.level))

    def grad(self, xh):
        return np.zeros(np.asarray(xh, float).shape)


@dataclass(frozen=True, eq=False)
class GaussianSurface:
    """``z = base + sum_i a_i exp(-|xh - c_i|^2 / w_i^2)`` over the horizontal coordinates."""

    base: float
    amplitudes: np.ndarray
    centers: np.ndarray
    widths: np.ndarray
    seed: int = None

    def value(self, xh):
        xh = np.asarray(xh, float)
        z = np.full(xh.shape[:-1], float(self.base))
        for a, c, w in zip(self.amplitudes, self.centers, self.widths):
            z = z + a * np.exp(-np.sum((xh - c) ** 2, axis=-1) / w ** 2)
        return z

    def grad(self, xh):
        xh = np.asarray(xh, float)
        g = np.zeros(xh.shape)
        for a, c, w in zip(self.amplitudes, self.centers, self.widths):
            e = a * np.exp(-np.sum((xh - c) ** 2, axis=-1) / w ** 2)
            g += (-2.0 * (xh - c) / w ** 2) * e[..., None]
        return g

    def scaled(self, factor, base=None):
        return GaussianSurface(self.base if base is None else base, self.amplitudes * factor,
                               self.centers, self.widths, self.seed)


def gaussian_topography(seed, amplitude, count, extent, base=0.0, width_range=(0.15, 0.3)):
    """Seeded sum of ``count`` Gaussian hills/valleys over ``extent``.

    ``extent`` is ``((x0, x1),)`` in 2D or ``((x0, x1), (y0, y1))`` in 3D;
    widths are drawn as fractions of the smallest horizontal extent.
    """
    if not amplitude >= 0:
        raise ValueError("amplitude must be nonnegative")
    extent = np.asarray(extent, dtype=float).reshape(-1, 2)
    rng = np.random.Generator(np.random.PCG64(seed))
    lo, hi = extent[:, 0], extent[:, 1]
    span = float(np.min(hi - lo))
    centers = lo + (hi - lo) * rng.uniform(0.2, 0.8, size=(count, extent.shape[0]))
    widths = span * rng.uniform(width_range[0], width_range[1], size=count)
    signs = rng.choice([-1.0, 1.0], size=count)
    amps = amplitude * signs * rng.uniform(0.5, 1.0, size=count)
    return GaussianSurface(float(base), amps, centers, widths, int(seed))


@dataclass(frozen=True, eq=False)
class LayerMapping(Mapping):
    """Vertically blended block between ``bottom`` and ``top`` surfaces.

    Parametric coordinates are ``(xi_1, ..., xi_{d-1}, eta)`` with ``eta`` in
    ``[0, 1]``.  Horizontal coordinates ``x_k = phi_k(xi_k)`` (optional
    stretches) and ``x_d = B(x_h) + (T(x_h) - B(x_h)) s(eta)`` with an optional
    vertical stretch ``s``.
    """

    d: int
    bottom: object
    top: object
    horizontal: tuple = None
    vertical: Stretch1D = None

    @property
    def dim(self):
        return self.d

    def _horiz(self, xi):
        nh = self.d - 1
        xh = np.array(xi[..., :nh], dtype=float)
        dh = np.ones(xh.shape)
        if self.horizontal is not None:
            for k, a in enumerate(self.horizontal):
                if a is not None:
                    dh[..., k] = a.deriv(xi[..., k])
                    xh[..., k] = a.value(xi[..., k])
        return xh, dh

    def _s(self, eta):
        if self.vertical is None:
            return eta, np.ones_like(eta)
        return self.vertical.value(eta), self.vertical.deriv(eta)

    def forward(self, xi):
        xi = np.asarray(xi, float)
        xh, _ = self._horiz(xi)
        s, _ = self._s(xi[..., -1])
        B, T = self.bottom.value(xh), self.top.value(xh)
        return np.concatenate([xh, (B + (T - B) * s)[..., None]], axis=-1)

    def jacobian(self, xi):
        xi = np.asarray(xi, float)
        d = self.d
        xh, dh = self._horiz(xi)
        s, ds = self._s(xi[..., -1])
        B, T = self.bottom.value(xh), self.top.value(xh)
        gB, gT = self.bottom.grad(xh), self.top.grad(xh)
        Jm = np.zeros(xi.shape[:-1] + (d, d))
        for k in range(d - 1):
            Jm[..., k, k] = dh[..., k]
            Jm[..., d - 1, k] = (gB[..., k] + (gT[..., k] - gB[..., k]) * s) * dh[..., k]
        Jm[..., d - 1, d - 1] = (T - B) * ds
        return Jm


def mapping_from_config(name, params, dim):
    """Build a mapping from the config catalogue (``name`` + ``params``)."""
    params = dict(params or {})
    if name == "identity":
        return identity(dim)
    if name == "affine":
        return Affine(np.asarray(params["matrix"], float), params.get("offset"))
    if name == "scaling":
        return scaling(params["factors"])
    if name == "shear":
        return shear2d(float(params["alpha"]))
    if name == "oblique":
        return oblique_halfplane(float(params["angle_deg"]), float(params.get("bottom", -1500.0)),
                                 float(params.get("top", 0.0)), params.get("mode", "shear"))
    raise ValueError(f"unknown mapping {name!r}")


# --------------------------------------------------------------------------
# metrics and grids


def invert_small(Jm):
    """Inverse and determinant of stacked 2x2 / 3x3 matrices by explicit formulas."""
    d = Jm.shape[-1]
    if d == 1:
        det = Jm[..., 0, 0]
        return (1.0 / det)[..., None, None], det
    if d == 2:
        a, b, c, e = Jm[..., 0, 0], Jm[..., 0, 1], Jm[..., 1, 0], Jm[..., 1, 1]
        det = a * e - b * c
        inv = np.empty_like(Jm)
        inv[..., 0, 0] = e / det
        inv[..., 0, 1] = -b / det
        inv[..., 1, 0] = -c / det
        inv[..., 1, 1] = a / det
        return inv, det
    if d == 3:
        adj = np.empty_like(Jm)
        for i in range(3):
            for j in range(3):
                r = [k for k in range(3) if k != j]
                c = [k for k in range(3) if k != i]
                minor = Jm[..., r[0], c[0]] * Jm[..., r[1], c[1]] - Jm[..., r[0], c[1]] * Jm[..., r[1], c[0]]
                adj[..., i, j] = (-1) ** (i + j) * minor
        det = np.einsum("...j,...j->...", Jm[..., 0, :], adj[..., :, 0])
        return adj / det[..., None, None], det
    raise ValueError(f"unsupported dimension {d}")


@dataclass(frozen=True, eq=False)
class MetricField:
    """Per-node ``J`` and ``T = (dx/dxi)^-1`` on a block (node axes first)."""

    J: np.ndarray
    T: np.ndarray
    jac: np.ndarray

    def face_row_norm(self, axis, side):
        """Signed ``T_(k)`` on a face: ``side * |T_k.|`` (negative on the min face)."""
        Tf = _face(self.T, axis, side)
        return side * np.linalg.norm(Tf[..., axis, :], axis=-1)

    def face_normal(self, axis, side):
        """Outward unit normal ``nu_kj = T_kj / T_(k)`` on a face."""
        Tf = _face(self.T, axis, side)
        nrm = np.linalg.norm(Tf[..., axis, :], axis=-1)
        return side * Tf[..., axis, :] / nrm[..., None]


def _face(arr, axis, side):
    return np.take(arr, 0 if side < 0 else -1, axis=axis)


def metrics(mapping, xi):
    """Metric field from the analytic Jacobian at parametric nodes ``xi[..., d]``."""
    Jm = mapping.jacobian(xi)
    T, det = invert_small(Jm)
    if np.any(~np.isfinite(det)) or np.any(det <= 0):
        raise ValueError(f"mapping is degenerate or orientation-reversing (min J = {np.nanmin(det):.3e})")
    return MetricField(det, T, Jm)


@dataclass(frozen=True, eq=False)
class BlockGrid:
    """Logically rectangular grid: per-axis triplets, parametric and physical nodes."""

    triplets: tuple
    mapping: Mapping
    xi: np.ndarray = field(repr=False)
    x: np.ndarray = field(repr=False)

    @property
    def dims(self):
        return tuple(t.n_nodes for t in self.triplets)

    @property
    def dim(self):
        return len(self.triplets)

    def metrics(self):
        return metrics(self.mapping, self.xi)


def build_grid(mapping, triplets):
    triplets = tuple(triplets)
    axes = [t.nodes for t in triplets]
    mesh = np.meshgrid(*axes, indexing="ij")
    xi = np.stack(mesh, axis=-1)
    if mapping.dim is not None and mapping.dim != len(triplets):
        raise ValueError(f"mapping dimension {mapping.dim} does not match {len(triplets)} axes")
    return BlockGrid(triplets, mapping, xi, mapping.forward(xi))


def uniform_axis(kind, n, lo, hi, p=4):
    """Triplet on ``[lo, hi]``: ``shifted``/``symmetric`` uniform or ``gll``."""
    return sbp.build_triplet(kind, n, p=p, a=lo, b=hi)


def numeric_jacobian(mapping, xi, delta=1e-5):
    """Central-difference Jacobian (relative step ``delta``) for cross-checking."""
    xi = np.asarray(xi, float)
    d = xi.shape[-1]
    scale = np.maximum(np.abs(xi), 1.0)
    out = np.zeros(xi.shape[:-1] + (d, d))
    for b in range(d):
        step = np.zeros_like(xi)
        step[..., b] = delta * scale[..., b]
        out[..., :, b] = (mapping.forward(xi + step) - mapping.forward(xi - step)) / (2 * step[..., b][..., None])
    return out
