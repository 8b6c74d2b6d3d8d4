"""One-dimensional summation-by-parts operator triplets.

A triplet is a pair of first-derivative operators ``D+`` and ``D-`` together
with a positive diagonal norm ``H`` satisfying

    H D+ + (D-)^T H = Q,      Q = diag(-1, 0, ..., 0, 1).

Three families are provided:

* ``shifted_uniform`` -- forward/backward biased interior stencils on a uniform
  grid.  The p=4 closure is the published rational table; p=6 and p=8 are
  derived by :func:`derive_closure`.
* ``symmetric_uniform`` -- the classical central-stencil operator with
  ``D+ = D- = D``.
* ``gll`` -- the Gauss-Lobatto-Legendre collocation (spectral element cell)
  operator, again with ``D+ = D- = D``.

Closures are derived in exact rational arithmetic (sympy ``DomainMatrix`` over
``QQ``).  The unknowns are ``m_ij = h_i d+_ij`` and ``h_i`` on the first ``r``
rows, which makes both the identity and the accuracy conditions linear.
"""
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from importlib import resources

import numpy as np
import scipy.sparse as sps
from sympy import QQ
from sympy.polys.matrices import DomainMatrix

from .kernels import CsrOp

SUPPORTED_ORDERS = (4, 6, 8)
KINDS = ("shifted_uniform", "symmetric_uniform", "gll")

F = Fraction


class ClosureError(ValueError):
    """The closure system is infeasible or produced an inadmissible norm."""


def _fr(text):
    return [F(s) for s in text.split(",")]


# The published p=4 shifted closure (rows of D+ and D- scaled by h; H / h).
_P4_H = (F(49, 144), F(61, 48), F(41, 48), F(149, 144))
_P4_DPLUS = (
    _fr("-59/42,12/7,-3/14,-2/21"),
    _fr("-103/183,15/122,31/61,-49/366,4/61"),
    _fr("59/246,-38/41,-21/82,176/123,-24/41,4/41"),
    _fr("-5/447,15/298,-51/149,-665/894,216/149,-72/149,12/149"),
)
_P4_DMINUS = (
    _fr("-451/294,103/49,-59/98,5/147"),
    _fr("-28/61,-15/122,38/61,-5/122"),
    _fr("7/82,-31/41,21/82,17/41"),
    _fr("14/447,49/298,-176/149,665/894,36/149"),
)
# Pin that selects the published table from the one-parameter p=4 family.
P4_PUBLISHED_PIN = {(1, 4): F(-2, 21)}


# --------------------------------------------------------------------------
# interior stencils


def _solve_exact(rows, rhs):
    A = DomainMatrix([[QQ(int(v.numerator), int(v.denominator)) for v in r] for r in rows],
                     (len(rows), len(rows[0])), QQ)
    b = DomainMatrix([[QQ(int(v.numerator), int(v.denominator))] for v in rhs], (len(rhs), 1), QQ)
    x = A.lu_solve(b)
    return [_to_fraction(e) for e in x.to_list_flat()]


def _to_fraction(e):
    return F(int(e.numerator), int(e.denominator))


@lru_cache(maxsize=None)
def interior_stencil(p, kind):
    """Exact interior first-derivative stencil as ``{offset: coefficient}``.

    ``kind="shifted"`` uses offsets ``-p/2+1 .. p/2+1`` (the ``D+`` stencil);
    ``kind="symmetric"`` the central offsets ``-p/2 .. p/2``.
    """
    _check_order(p)
    if kind == "shifted":
        offs = list(range(-p // 2 + 1, p // 2 + 2))
    elif kind == "symmetric":
        offs = list(range(-p // 2, p // 2 + 1))
    else:
        raise ValueError(f"unknown stencil kind {kind!r}")
    rows = [[F(o) ** k for o in offs] for k in range(len(offs))]
    rhs = [F(1) if k == 1 else F(0) for k in range(len(offs))]
    coef = _solve_exact(rows, rhs)
    return {o: c for o, c in zip(offs, coef) if c != 0}


def _check_order(p):
    if p not in SUPPORTED_ORDERS:
        raise ValueError(f"unsupported order p={p}; expected one of {SUPPORTED_ORDERS}")


# --------------------------------------------------------------------------
# closures


@dataclass(frozen=True)
class ClosureSolution:
    """Boundary closure of a uniform-grid triplet, exact rationals, spacing 1.

    ``d_plus_rows[i]`` / ``d_minus_rows[i]`` hold row ``i+1`` from column 1;
    missing trailing entries are zero.  Right-boundary rows follow from the
    mirror rule ``d+_i(j) = -d-_{N-i+1}(N-j+1)``.
    """

    order: int
    kind: str
    boundary_weights: tuple
    d_plus_rows: tuple
    d_minus_rows: tuple
    residuals: dict = field(default_factory=dict)
    free_parameter_report: dict = field(default_factory=dict)

    @property
    def closure_size(self):
        return len(self.boundary_weights)

    @property
    def closure_rows(self):
        return self.d_plus_rows, self.d_minus_rows

    @property
    def stencil_kind(self):
        return "shifted" if self.kind in ("shifted", "shifted_uniform") else "symmetric"

    @property
    def interior_plus(self):
        return interior_stencil(self.order, self.stencil_kind)

    @property
    def interior_minus(self):
        return {-o: -c for o, c in self.interior_plus.items()}

    @property
    def min_nodes(self):
        """Smallest N for which left and right closures do not interact."""
        return 2 * self.order + 1

    def same_coefficients(self, other):
        def trim(rows):
            out = []
            for r in rows:
                r = list(r)
                while r and r[-1] == 0:
                    r.pop()
                out.append(tuple(r))
            return tuple(out)

        return (
            self.order == other.order
            and self.stencil_kind == other.stencil_kind
            and tuple(self.boundary_weights) == tuple(other.boundary_weights)
            and trim(self.d_plus_rows) == trim(other.d_plus_rows)
            and trim(self.d_minus_rows) == trim(other.d_minus_rows)
        )


def _closure_system(p, kind, r, pins):
    """Linear system for unknowns z = (m_11..m_rr, h_1..h_r)."""
    q = p // 2
    st = interior_stencil(p, kind)
    nm = r * r
    nvar = nm + r
    width = r + p + 4

    def mvar(i, j):
        return (i - 1) * r + (j - 1)

    def hvar(i):
        return nm + i - 1

    def dint(s):
        return st.get(s, F(0))

    def qsig(i, j):
        return F(-1) if i == j == 1 else F(0)

    rows, rhs = [], []
    for i in range(1, r + 1):
        xi = F(i - 1)
        for k in range(q + 1):
            # D+ exactness: sum_j m_ij x_j^k = k h_i x_i^(k-1)
            row = [F(0)] * nvar
            const = F(0)
            for j in range(1, width):
                xk = F(j - 1) ** k
                if j <= r:
                    row[mvar(i, j)] += xk
                else:
                    const += dint(j - i) * xk
            if k > 0:
                row[hvar(i)] -= k * xi ** (k - 1)
            rows.append(row)
            rhs.append(-const)
            # D- exactness: sum_j (Q_ij - m_ji) x_j^k = k h_i x_i^(k-1)
            row = [F(0)] * nvar
            const = F(0)
            for j in range(1, width):
                xk = F(j - 1) ** k
                const += qsig(i, j) * xk
                if j <= r:
                    row[mvar(j, i)] -= xk
                else:
                    const -= dint(i - j) * xk
            if k > 0:
                row[hvar(i)] -= k * xi ** (k - 1)
            rows.append(row)
            rhs.append(-const)
    if kind == "symmetric":
        for i in range(1, r + 1):
            for j in range(i, r + 1):
                row = [F(0)] * nvar
                row[mvar(i, j)] += 1
                row[mvar(j, i)] += 1
                rows.append(row)
                rhs.append(qsig(i, j))
    for (i, j), val in (pins or {}).items():
        if not (1 <= i <= r and 1 <= j <= r):
            raise ValueError(f"pin {(i, j)} lies outside the {r}x{r} closure block")
        row = [F(0)] * nvar
        row[mvar(i, j)] = F(1)
        row[hvar(i)] = -F(val)
        rows.append(row)
        rhs.append(F(0))
    names = [f"hd+[{i},{j}]" for i in range(1, r + 1) for j in range(1, r + 1)]
    names += [f"h[{i}]" for i in range(1, r + 1)]
    return rows, rhs, names, mvar, hvar, dint


def _dm(rows):
    return DomainMatrix(
        [[QQ(int(v.numerator), int(v.denominator)) for v in row] for row in rows],
        (len(rows), len(rows[0])),
        QQ,
    )


def derive_closure(p, kind, tolerance=1e-13, pins=None, objective="all"):
    """Derive boundary closure rows and weights for a uniform-grid triplet.

    The closure block has ``r = p`` rows.  Conditions: the SBP identity on the
    closure rows, exactness of every closure row of ``D+`` and ``D-`` on
    monomials up to degree ``p/2``, interior stencils fixed, and (for
    ``kind="symmetric"``) ``D- = D+``.  Free parameters left by these linear
    conditions are fixed by ``pins`` (``{(i, j): d+_ij}``, 1-based, spacing 1)
    and then by minimising the Euclidean norm of the unknown vector
    (``objective="all"``: closure entries ``h_i d+_ij`` and weights;
    ``objective="closure"``: closure entries only).
    """
    _check_order(p)
    if kind not in ("shifted", "symmetric"):
        raise ValueError(f"unknown closure kind {kind!r}")
    if objective not in ("all", "closure"):
        raise ValueError(f"unknown objective {objective!r}")
    r = p
    rows, rhs, names, mvar, hvar, dint = _closure_system(p, kind, r, pins)
    nvar = len(names)
    A = _dm(rows)
    aug = A.hstack(_dm([[v] for v in rhs]))
    R, pivots = aug.rref()
    if nvar in pivots:
        raise ClosureError(f"closure system for p={p} ({kind}) is infeasible")
    Rl = R.to_list()
    z0 = [QQ(0)] * nvar
    for row, col in enumerate(pivots):
        z0[col] = Rl[row][nvar]
    z0 = DomainMatrix([[v] for v in z0], (nvar, 1), QQ)
    null = A.nullspace()
    nfree = null.shape[0] if null.shape[1] == nvar else 0
    if nfree:
        Nm = null.transpose()
        sel = list(range(r * r)) if objective == "closure" else list(range(nvar))
        Ns = DomainMatrix([Nm.to_list()[s] for s in sel], (len(sel), nfree), QQ)
        zs = DomainMatrix([z0.to_list()[s] for s in sel], (len(sel), 1), QQ)
        G = Ns.transpose() * Ns
        if G.rank() < nfree:
            raise ClosureError("minimum-norm objective does not determine the free parameters")
        c = G.lu_solve(-(Ns.transpose() * zs))
        z = z0 + Nm * c
    else:
        z = z0
    zv = [_to_fraction(e) for e in z.to_list_flat()]

    h = tuple(zv[hvar(i)] for i in range(1, r + 1))
    if any(w <= 0 for w in h):
        raise ClosureError(f"nonpositive boundary weight in p={p} ({kind}) closure: {[float(w) for w in h]}")

    def m(i, j):
        if i <= r and j <= r:
            return zv[mvar(i, j)]
        return dint(j - i)

    width = r + p // 2 + 1
    dplus, dminus = [], []
    for i in range(1, r + 1):
        dplus.append(tuple(m(i, j) / h[i - 1] for j in range(1, width + 1)))
        dminus.append(tuple(((F(-1) if i == j == 1 else F(0)) - m(j, i)) / h[i - 1] for j in range(1, width + 1)))

    # free parameter values: the non-pivot unknowns of the reduced system
    free_cols = [c for c in range(nvar) if c not in set(pivots)]
    report = {
        "count": nfree,
        "objective": objective if nfree else "none",
        "pins": {f"d+[{i},{j}]": v for (i, j), v in (pins or {}).items()},
        "values": {names[c]: zv[c] for c in free_cols},
    }
    sol = ClosureSolution(p, kind, h, tuple(dplus), tuple(dminus), {}, report)
    res = closure_residuals(sol)
    if res["identity"] > tolerance or res["accuracy"] > tolerance:
        raise ClosureError(f"closure residuals {res} exceed tolerance {tolerance}")
    return ClosureSolution(p, kind, h, tuple(dplus), tuple(dminus), res, report)


def closure_residuals(sol):
    """Exact identity and accuracy residuals of a closure (as floats)."""
    n = sol.min_nodes + 2
    Dp, Dm, h = rational_matrices(sol, n)
    ident = F(0)
    for i in range(n):
        for j in range(n):
            v = h[i] * Dp[i][j] + Dm[j][i] * h[j] - (F(-1) if i == j == 0 else F(1) if i == j == n - 1 else F(0))
            ident = max(ident, abs(v))
    acc = F(0)
    q = sol.order // 2
    for D in (Dp, Dm):
        for i in range(sol.closure_size):
            for k in range(q + 1):
                val = sum(D[i][j] * F(j) ** k for j in range(n))
                ex = k * F(i) ** (k - 1) if k > 0 else F(0)
                acc = max(acc, abs(val - ex))
    return {"identity": float(ident), "accuracy": float(acc)}


def rational_matrices(sol, n):
    """Dense exact ``D+``, ``D-`` (lists of Fractions) and ``H`` diagonal, spacing 1."""
    r = sol.closure_size
    if n < sol.min_nodes:
        raise ValueError(f"n_nodes={n} too small for p={sol.order}; need at least {sol.min_nodes}")
    Dp = [[F(0)] * n for _ in range(n)]
    Dm = [[F(0)] * n for _ in range(n)]
    ip, im = sol.interior_plus, sol.interior_minus
    for i in range(n):
        for o, c in ip.items():
            if 0 <= i + o < n:
                Dp[i][i + o] = c
        for o, c in im.items():
            if 0 <= i + o < n:
                Dm[i][i + o] = c
    for i in range(r):
        Dp[i] = [F(0)] * n
        Dm[i] = [F(0)] * n
        for j, v in enumerate(sol.d_plus_rows[i][:n]):
            Dp[i][j] = v
        for j, v in enumerate(sol.d_minus_rows[i][:n]):
            Dm[i][j] = v
    for i in range(n - r, n):
        Dp[i] = [-Dm[n - 1 - i][n - 1 - j] for j in range(n)]
        Dm[i] = [-Dp[n - 1 - i][n - 1 - j] for j in range(n)]
    h = [F(1)] * n
    for i in range(r):
        h[i] = h[n - 1 - i] = sol.boundary_weights[i]
    return Dp, Dm, h


# --------------------------------------------------------------------------
# rational catalog files


def write_catalog(sol, path_or_file):
    """Write a closure as a plain-text catalog of exact rationals."""
    lines = [
        f"# order {sol.order}",
        f"# kind {sol.stencil_kind}",
        f"# identity_residual {closure_residuals(sol)['identity']!r}",
        f"# closure_size {sol.closure_size}",
        f"# free_parameters {sol.free_parameter_report.get('count', 0)}",
        f"# objective {sol.free_parameter_report.get('objective', 'none')}",
    ]
    for name, val in sol.free_parameter_report.get("pins", {}).items():
        lines.append(f"# pin {name} {val}")
    lines.append("# section h")
    lines.append(" ".join(str(w) for w in sol.boundary_weights))
    lines.append("# section d_plus")
    lines.extend(" ".join(str(v) for v in row) for row in sol.d_plus_rows)
    lines.append("# section d_minus")
    lines.extend(" ".join(str(v) for v in row) for row in sol.d_minus_rows)
    lines.append("# section interior_plus")
    lines.append(" ".join(f"{o}:{c}" for o, c in sorted(sol.interior_plus.items())))
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def parse_catalog(text):
    meta, sections, current = {}, {}, None
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if parts[0] == "section":
                current = parts[1]
                sections[current] = []
            elif parts[0] == "pin":
                meta.setdefault("pins", {})[parts[1]] = F(parts[2])
            else:
                meta[parts[0]] = " ".join(parts[1:])
            continue
        if current is None:
            raise ValueError(f"catalog data line outside a section: {raw!r}")
        sections[current].append(line.split())
    p = int(meta["order"])
    kind = meta["kind"]
    sol = ClosureSolution(
        order=p,
        kind=kind,
        boundary_weights=tuple(F(v) for v in sections["h"][0]),
        d_plus_rows=tuple(tuple(F(v) for v in row) for row in sections["d_plus"]),
        d_minus_rows=tuple(tuple(F(v) for v in row) for row in sections["d_minus"]),
        residuals={},
        free_parameter_report={
            "count": int(meta.get("free_parameters", 0)),
            "objective": meta.get("objective", "none"),
            "pins": meta.get("pins", {}),
        },
    )
    stored = {int(t.split(":")[0]): F(t.split(":")[1]) for t in sections["interior_plus"][0]}
    if stored != sol.interior_plus:
        raise ValueError("catalog interior stencil does not match the order/kind header")
    return sol


def read_catalog(path):
    with open(path, encoding="utf-8") as fh:
        return parse_catalog(fh.read())


def published_p4_closure():
    """The tabulated p=4 shifted closure (the golden source for p=4)."""
    sol = ClosureSolution(
        order=4,
        kind="shifted",
        boundary_weights=_P4_H,
        d_plus_rows=tuple(tuple(r) for r in _P4_DPLUS),
        d_minus_rows=tuple(tuple(r) for r in _P4_DMINUS),
        residuals={},
        free_parameter_report={"count": 1, "objective": "pinned", "pins": {"d+[1,4]": F(-2, 21)}},
    )
    return ClosureSolution(
        sol.order, sol.kind, sol.boundary_weights, sol.d_plus_rows, sol.d_minus_rows,
        closure_residuals(sol), sol.free_parameter_report,
    )


@lru_cache(maxsize=None)
def closure_for(p, kind):
    """Closure used by the builders: published table, shipped catalog, or derivation."""
    _check_order(p)
    if kind == "shifted" and p == 4:
        return published_p4_closure()
    name = f"{kind}_p{p}.txt"
    try:
        text = resources.files("elastowave").joinpath("data", name).read_text(encoding="utf-8")
    except (FileNotFoundError, OSError):
        return derive_closure(p, kind)
    return parse_catalog(text)


# --------------------------------------------------------------------------
# triplets


@dataclass(frozen=True, eq=False)
class OperatorTriplet:
    """``D+``, ``D-``, ``H`` and ``Q`` on ``n_nodes`` abscissae.

    ``d_plus`` / ``d_minus`` are scipy CSR matrices for the uniform kinds and
    dense arrays for ``gll``.  ``q_signature`` is the diagonal of ``Q``.
    """

    n_nodes: int
    nodes: np.ndarray
    d_plus: object
    d_minus: object
    h_weights: np.ndarray
    q_signature: np.ndarray
    interior_order: int
    boundary_order: int
    kind: str
    spacing: float = None
    closure: ClosureSolution = None

    def dense(self):
        """Dense ``(D+, D-, H, Q)`` (testing/verification path)."""
        def as_dense(m):
            return m.toarray() if sps.issparse(m) else np.array(m, dtype=float)

        return (as_dense(self.d_plus), as_dense(self.d_minus),
                np.diag(self.h_weights), np.diag(self.q_signature))

    @cached_property
    def plus_op(self):
        return CsrOp.from_matrix(self.d_plus)

    @cached_property
    def minus_op(self):
        return CsrOp.from_matrix(self.d_minus)

    @cached_property
    def div_op(self):
        """``(H D- - Q) H^-1``, the conservative divergence (equals ``-(D+)^T``)."""
        m = sps.csr_matrix(self.d_minus) if not sps.issparse(self.d_minus) else self.d_minus
        hd = sps.diags(self.h_weights) @ m - sps.diags(self.q_signature)
        return CsrOp.from_matrix(hd @ sps.diags(1.0 / self.h_weights))

    @property
    def length(self):
        return float(self.nodes[-1] - self.nodes[0])

    def exact_matrices(self):
        """Exact rational ``D+``, ``D-`` and ``H`` for uniform kinds (spacing as an exact binary fraction)."""
        if self.closure is None:
            raise ValueError(f"no rational form for kind {self.kind!r}")
        Dp, Dm, h = rational_matrices(self.closure, self.n_nodes)
        hs = F(self.spacing)
        return ([[v / hs for v in row] for row in Dp], [[v / hs for v in row] for row in Dm],
                [w * hs for w in h])


def _q_signature(n):
    q = np.zeros(n)
    q[0], q[-1] = -1.0, 1.0
    return q


def _uniform_csr(sol, n, spacing):
    r = sol.closure_size
    rows, cols, vals = [], [], []

    def band(stencil, lo, hi):
        i = np.arange(lo, hi)
        for o, c in stencil.items():
            rows.append(i)
            cols.append(i + o)
            vals.append(np.full(i.size, float(c)))

    def closure_rows(tab, sign, mirror):
        for i, row in enumerate(tab):
            js = np.array([j for j, v in enumerate(row) if v != 0 and j < n], dtype=np.int64)
            vs = np.array([sign * float(row[j]) for j in js])
            if mirror:
                rows.append(np.full(js.size, n - 1 - i))
                cols.append(n - 1 - js)
            else:
                rows.append(np.full(js.size, i))
                cols.append(js)
            vals.append(vs)

    out = []
    for interior, own, other in ((sol.interior_plus, sol.d_plus_rows, sol.d_minus_rows),
                                 (sol.interior_minus, sol.d_minus_rows, sol.d_plus_rows)):
        rows.clear(), cols.clear(), vals.clear()
        band(interior, r, n - r)
        closure_rows(own, 1.0, mirror=False)
        closure_rows(other, -1.0, mirror=True)
        m = sps.csr_matrix(
            (np.concatenate(vals) / spacing, (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        )
        m.eliminate_zeros()
        out.append(m)
    return out


def _build_uniform(p, kind, n_nodes, spacing, origin):
    _check_order(p)
    if not (isinstance(n_nodes, (int, np.integer)) and n_nodes > 2 * p):
        raise ValueError(f"n_nodes must be an integer > 2p = {2 * p} for p={p}, got {n_nodes}")
    if not spacing > 0:
        raise ValueError(f"spacing must be positive, got {spacing}")
    sol = closure_for(p, kind)
    n = int(n_nodes)
    dp, dm = _uniform_csr(sol, n, spacing)
    h = np.ones(n)
    r = sol.closure_size
    h[:r] = [float(w) for w in sol.boundary_weights]
    h[n - r:] = h[:r][::-1]
    return OperatorTriplet(
        n_nodes=n,
        nodes=origin + spacing * np.arange(n, dtype=float),
        d_plus=dp,
        d_minus=dm,
        h_weights=h * spacing,
        q_signature=_q_signature(n),
        interior_order=p,
        boundary_order=p // 2,
        kind=f"{kind}_uniform",
        spacing=float(spacing),
        closure=sol,
    )


def build_shifted_uniform(p, n_nodes, spacing, origin=0.0):
    """Shifted-stencil triplet (``D+`` forward biased, ``D-`` its mirror)."""
    return _build_uniform(p, "shifted", n_nodes, spacing, origin)


def build_symmetric_uniform(p, n_nodes, spacing, origin=0.0):
    """Central-stencil triplet with ``D+ = D- = D``."""
    return _build_uniform(p, "symmetric", n_nodes, spacing, origin)


def gll_nodes_weights(n_nodes, tol=1e-14, max_iter=100):
    """GLL nodes and weights on [-1, 1]: +-1 plus the roots of P'_{N-1}."""
    if n_nodes < 3:
        raise ValueError("GLL needs at least 3 nodes")
    N = n_nodes - 1  # polynomial degree
    x = -np.cos(np.pi * np.arange(n_nodes) / N)
    P = np.zeros((n_nodes, n_nodes))
    for _ in range(max_iter):
        P[:, 0] = 1.0
        P[:, 1] = x
        for k in range(2, n_nodes):
            P[:, k] = ((2 * k - 1) * x * P[:, k - 1] - (k - 1) * P[:, k - 2]) / k
        dx = (x * P[:, N] - P[:, N - 1]) / (n_nodes * P[:, N])
        x = x - dx
        if np.max(np.abs(dx)) < tol:
            break
    else:
        raise RuntimeError(f"GLL Newton iteration did not converge for N={n_nodes}")
    x[0], x[-1] = -1.0, 1.0
    P[:, 0] = 1.0
    P[:, 1] = x
    for k in range(2, n_nodes):
        P[:, k] = ((2 * k - 1) * x * P[:, k - 1] - (k - 1) * P[:, k - 2]) / k
    w = 2.0 / (N * n_nodes * P[:, N] ** 2)
    return x, w, P[:, N]


def build_gll(n_nodes, a=-1.0, b=1.0):
    """GLL collocation triplet on ``[a, b]`` with ``D+ = D- = D``."""
    if not (isinstance(n_nodes, (int, np.integer)) and n_nodes >= 3):
        raise ValueError(f"GLL needs an integer n_nodes >= 3, got {n_nodes}")
    if not b > a:
        raise ValueError("GLL interval must satisfy b > a")
    n = int(n_nodes)
    x, w, PN = gll_nodes_weights(n)
    N = n - 1
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                D[i, j] = PN[i] / (PN[j] * (x[i] - x[j]))
    D[0, 0] = -N * (N + 1) / 4.0
    D[-1, -1] = N * (N + 1) / 4.0
    scale = (b - a) / 2.0
    return OperatorTriplet(
        n_nodes=n,
        nodes=a + (x + 1.0) * scale,
        d_plus=D / scale,
        d_minus=D / scale,
        h_weights=w * scale,
        q_signature=_q_signature(n),
        interior_order=N,
        boundary_order=N,
        kind="gll",
        spacing=None,
    )


def build_triplet(kind, n_nodes, p=4, a=0.0, b=None, spacing=None):
    """Factory used by the grid/config layer.

    Uniform kinds take ``spacing`` (or derive it from ``[a, b]``); ``gll``
    always spans ``[a, b]``.
    """
    if kind in ("gll",):
        return build_gll(n_nodes, a, b)
    if spacing is None:
        spacing = (b - a) / (n_nodes - 1)
    if kind in ("shifted", "shifted_uniform"):
        return build_shifted_uniform(p, n_nodes, spacing, a)
    if kind in ("symmetric", "symmetric_uniform"):
        return build_symmetric_uniform(p, n_nodes, spacing, a)
    raise ValueError(f"unknown triplet kind {kind!r}")


@dataclass(frozen=True, eq=False)
class PeriodicPair:
    """Circulant ``D+``/``D-`` on a periodic uniform grid (``H = h I``, ``Q = 0``)."""

    d_plus: sps.csr_matrix
    d_minus: sps.csr_matrix
    spacing: float

    @property
    def n_nodes(self):
        return self.d_plus.shape[0]


def build_periodic(p, n_nodes, spacing, kind="shifted"):
    st = interior_stencil(p, kind)
    n = int(n_nodes)
    if n <= p + 2:
        raise ValueError("periodic grid too small for the stencil")
    i = np.arange(n)
    rows, cols, vals = [], [], []
    for o, c in st.items():
        rows.append(i)
        cols.append((i + o) % n)
        vals.append(np.full(n, float(c) / spacing))
    dp = sps.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return PeriodicPair(dp, sps.csr_matrix(-dp.T), float(spacing))


# --------------------------------------------------------------------------
# verification helpers


def identity_residual(t):
    """``max |H D+ + (D-)^T H - Q|`` in floating point."""
    Dp, Dm, H, Q = t.dense()
    return float(np.max(np.abs(H @ Dp + Dm.T @ H - Q)))


def exact_identity_residual(t):
    """Exact rational residual for uniform kinds (returns a Fraction)."""
    Dp, Dm, h = t.exact_matrices()
    n = t.n_nodes
    worst = F(0)
    for i in range(n):
        for j in range(n):
            v = h[i] * Dp[i][j] + Dm[j][i] * h[j]
            if i == j == 0:
                v += 1
            elif i == j == n - 1:
                v -= 1
            worst = max(worst, abs(v))
    return worst


def _row_order(D, x, i, scale, max_degree, rtol):
    s = (x - x[i]) / scale
    row = D[i]
    order = -1
    for m in range(max_degree + 1):
        sm = s ** m
        val = row @ sm
        expected = 1.0 / scale if m == 1 else 0.0
        mag = np.abs(row) @ np.abs(sm) + abs(expected)
        if abs(val - expected) > rtol * max(mag, 1e-300):
            break
        order = m
    return order


def per_row_order(D, x, scale, max_degree, rtol=1e-10):
    """Largest degree ``d`` with every monomial of degree <= d differentiated exactly at each row node.

    Monomials are taken in the local variable ``(x - x_i)/scale``, which spans
    the same polynomial space as ``x^k`` and avoids cancellation.
    """
    D = np.asarray(D, dtype=float)
    return np.array([_row_order(D, x, i, scale, max_degree, rtol) for i in range(len(x))])


def verify_triplet(t):
    """Certificate: identity residual, per-row order of ``D+`` and ``D-``, mirror check."""
    Dp, Dm, H, Q = t.dense()
    if t.kind == "gll":
        scale = t.length / 2.0
        max_degree = t.n_nodes
    else:
        scale = t.spacing
        max_degree = min(t.n_nodes - 1, 2 * t.interior_order + 2)
    x = t.nodes
    order_plus = per_row_order(Dp, x, scale, max_degree)
    order_minus = per_row_order(Dm, x, scale, max_degree)
    J = np.arange(t.n_nodes)[::-1]
    mirror = np.max(np.abs(Dp + Dm[np.ix_(J, J)])) if t.n_nodes else 0.0
    mag = np.max(np.abs(Dp))
    report = {
        "identity_residual": identity_residual(t),
        "per_row_order": np.minimum(order_plus, order_minus),
        "per_row_order_plus": order_plus,
        "per_row_order_minus": order_minus,
        "mirror_ok": bool(mirror <= 1e-13 * mag),
    }
    if t.closure is not None:
        report["identity_residual_exact"] = exact_identity_residual(t)
    return report


def discrete_delta(t, node_index):
    """Discrete delta at the 1-based ``node_index``: ``1/h_i`` there, zero elsewhere."""
    if not (isinstance(node_index, (int, np.integer)) and 1 <= node_index <= t.n_nodes):
        raise IndexError(f"node_index must be in 1..{t.n_nodes}, got {node_index}")
    v = np.zeros(t.n_nodes)
    v[node_index - 1] = 1.0 / t.h_weights[node_index - 1]
    return v
