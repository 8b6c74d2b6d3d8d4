"""Hot loops of the elastic operator.

Every kernel has a numba implementation and a numpy/scipy implementation with
identical semantics.  The active backend comes from ``ELASTOWAVE_BACKEND``
(see :mod:`elastowave._backend`) and can be switched at runtime with
:func:`use_backend`, which the tests and the benchmark rely on.

Array conventions
-----------------
* block fields are node-major: ``u[..., i]`` with the node axes first;
* derivative stacks and fluxes carry the parametric direction first:
  ``g[k, node, i] = D_k^+ u_i`` and ``F[k, node, i] = J T_kj sigma_ij``;
* per-node matrices are ``T[node, k, j]`` and ``C[node, a, b]`` (Voigt).
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sps

from . import _backend

_active = _backend.DEFAULT_BACKEND


def use_backend(name):
    """Select ``"numba"`` or ``"numpy"``; returns the previous backend name."""
    global _active
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not _backend.HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    previous, _active = _active, name
    return previous


def active_backend():
    return _active


@dataclass(frozen=True, eq=False)
class CsrOp:
    """A square 1D operator in compressed-row form, ready for axis application."""

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    matrix: sps.csr_matrix

    @classmethod
    def from_matrix(cls, mat):
        m = sps.csr_matrix(mat, dtype=np.float64)
        m.sum_duplicates()
        m.sort_indices()
        return cls(
            indptr=np.ascontiguousarray(m.indptr, dtype=np.int64),
            indices=np.ascontiguousarray(m.indices, dtype=np.int64),
            data=np.ascontiguousarray(m.data, dtype=np.float64),
            matrix=m,
        )

    @property
    def n(self):
        return self.matrix.shape[0]

    @cached_property
    def stencil(self):
        """``(lo, hi, offsets, coefs)``: rows ``lo <= i < hi`` repeat one stencil.

        Rows outside the range (closures, or every row of a dense GLL
        operator, where ``lo == hi``) are applied through the CSR arrays.
        """
        n = self.n
        ip, ix, dv = self.indptr, self.indices, self.data
        mid = n // 2
        off = ix[ip[mid]:ip[mid + 1]] - mid
        coef = dv[ip[mid]:ip[mid + 1]]

        def same(i):
            return (ip[i + 1] - ip[i] == off.size and np.array_equal(ix[ip[i]:ip[i + 1]] - i, off)
                    and np.array_equal(dv[ip[i]:ip[i + 1]], coef))

        if n < 3 or not same(mid) or off.size == 0:
            return 0, 0, np.zeros(0, np.int64), np.zeros(0)
        lo = mid
        while lo > 0 and same(lo - 1):
            lo -= 1
        hi = mid + 1
        while hi < n and same(hi):
            hi += 1
        return lo, hi, np.ascontiguousarray(off, np.int64), np.ascontiguousarray(coef, np.float64)


def _split(shape, axis):
    pre = int(np.prod(shape[:axis], dtype=np.int64))
    post = int(np.prod(shape[axis + 1:], dtype=np.int64))
    return pre, shape[axis], post


# --------------------------------------------------------------------------
# numpy / scipy reference path


def _axis_apply_np(op, x, axis, out, accumulate):
    pre, n, post = _split(x.shape, axis)
    x3 = x.reshape(pre, n, post)
    y = np.empty((pre, n, post))
    mat = op.matrix
    for a in range(pre):
        y[a] = mat @ x3[a]
    y = y.reshape(x.shape)
    if accumulate:
        out += y
    else:
        out[...] = y
    return out


def _flux_np(g, T, JW, C, F):
    d = g.shape[0]
    # grad[p, j, i] = du_i/dx_j
    grad = np.einsum("pkj,kpi->pji", T, g)
    if d == 2:
        e = np.stack([grad[:, 0, 0], grad[:, 1, 1], grad[:, 1, 0] + grad[:, 0, 1]], axis=1)
        s = np.einsum("pab,pb->pa", C, e)
        sig = np.empty((s.shape[0], 2, 2))
        sig[:, 0, 0] = s[:, 0]
        sig[:, 1, 1] = s[:, 1]
        sig[:, 0, 1] = sig[:, 1, 0] = s[:, 2]
    else:
        e = np.stack(
            [
                grad[:, 0, 0],
                grad[:, 1, 1],
                grad[:, 2, 2],
                grad[:, 1, 2] + grad[:, 2, 1],
                grad[:, 0, 2] + grad[:, 2, 0],
                grad[:, 0, 1] + grad[:, 1, 0],
            ],
            axis=1,
        )
        s = np.einsum("pab,pb->pa", C, e)
        sig = np.empty((s.shape[0], 3, 3))
        sig[:, 0, 0] = s[:, 0]
        sig[:, 1, 1] = s[:, 1]
        sig[:, 2, 2] = s[:, 2]
        sig[:, 1, 2] = sig[:, 2, 1] = s[:, 3]
        sig[:, 0, 2] = sig[:, 2, 0] = s[:, 4]
        sig[:, 0, 1] = sig[:, 1, 0] = s[:, 5]
    F[...] = np.einsum("p,pkj,pij->kpi", JW, T, sig)
    return F


def _scatter_add_np(out, ids, vals):
    for c in range(out.shape[1]):
        out[:, c] += np.bincount(ids, weights=vals[:, c], minlength=out.shape[0])
    return out


# --------------------------------------------------------------------------
# numba path

if _backend.HAVE_NUMBA:
    from numba import njit, prange

    @njit(parallel=True, cache=True)
    def _csr_axis_nb(indptr, indices, data, x, out, accumulate):
        pre, n, post = x.shape
        for idx in prange(pre * n):
            a = idx // n
            i = idx - a * n
            if not accumulate:
                for q in range(post):
                    out[a, i, q] = 0.0
            for kk in range(indptr[i], indptr[i + 1]):
                j = indices[kk]
                c = data[kk]
                for q in range(post):
                    out[a, i, q] += c * x[a, j, q]

    @njit(cache=True, inline="always")
    def _row_sum2(indptr, indices, data, x, a, i):
        s0 = 0.0
        s1 = 0.0
        for kk in range(indptr[i], indptr[i + 1]):
            j = indices[kk]
            c = data[kk]
            s0 += c * x[a, j, 0]
            s1 += c * x[a, j, 1]
        return s0, s1

    @njit(parallel=True, cache=True)
    def _csr_axis_nb_post2(indptr, indices, data, lo, hi, off, coef, x, out, accumulate):
        # last spatial axis of a 2-component field: closure rows through the
        # CSR arrays, interior rows through the repeated stencil
        pre, n, _ = x.shape
        m = off.shape[0]
        for a in prange(pre):
            for i in range(n):
                if lo <= i < hi:
                    s0 = 0.0
                    s1 = 0.0
                    for q in range(m):
                        c = coef[q]
                        s0 += c * x[a, i + off[q], 0]
                        s1 += c * x[a, i + off[q], 1]
                else:
                    s0, s1 = _row_sum2(indptr, indices, data, x, a, i)
                if accumulate:
                    out[a, i, 0] += s0
                    out[a, i, 1] += s1
                else:
                    out[a, i, 0] = s0
                    out[a, i, 1] = s1

    @njit(cache=True, inline="always")
    def _row_sum3(indptr, indices, data, x, a, i):
        s0 = 0.0
        s1 = 0.0
        s2 = 0.0
        for kk in range(indptr[i], indptr[i + 1]):
            j = indices[kk]
            c = data[kk]
            s0 += c * x[a, j, 0]
            s1 += c * x[a, j, 1]
            s2 += c * x[a, j, 2]
        return s0, s1, s2

    @njit(parallel=True, cache=True)
    def _csr_axis_nb_post3(indptr, indices, data, lo, hi, off, coef, x, out, accumulate):
        pre, n, _ = x.shape
        m = off.shape[0]
        for a in prange(pre):
            for i in range(n):
                if lo <= i < hi:
                    s0 = 0.0
                    s1 = 0.0
                    s2 = 0.0
                    for q in range(m):
                        c = coef[q]
                        s0 += c * x[a, i + off[q], 0]
                        s1 += c * x[a, i + off[q], 1]
                        s2 += c * x[a, i + off[q], 2]
                else:
                    s0, s1, s2 = _row_sum3(indptr, indices, data, x, a, i)
                if accumulate:
                    out[a, i, 0] += s0
                    out[a, i, 1] += s1
                    out[a, i, 2] += s2
                else:
                    out[a, i, 0] = s0
                    out[a, i, 1] = s1
                    out[a, i, 2] = s2

    @njit(parallel=True, cache=True)
    def _flux2_nb(g, T, JW, C, F):
        npts = JW.shape[0]
        for p in prange(npts):
            t00 = T[p, 0, 0]
            t01 = T[p, 0, 1]
            t10 = T[p, 1, 0]
            t11 = T[p, 1, 1]
            d00 = t00 * g[0, p, 0] + t10 * g[1, p, 0]
            d01 = t00 * g[0, p, 1] + t10 * g[1, p, 1]
            d10 = t01 * g[0, p, 0] + t11 * g[1, p, 0]
            d11 = t01 * g[0, p, 1] + t11 * g[1, p, 1]
            e0 = d00
            e1 = d11
            e2 = d10 + d01
            s0 = C[p, 0, 0] * e0 + C[p, 0, 1] * e1 + C[p, 0, 2] * e2
            s1 = C[p, 1, 0] * e0 + C[p, 1, 1] * e1 + C[p, 1, 2] * e2
            s2 = C[p, 2, 0] * e0 + C[p, 2, 1] * e1 + C[p, 2, 2] * e2
            w = JW[p]
            F[0, p, 0] = w * (t00 * s0 + t01 * s2)
            F[0, p, 1] = w * (t00 * s2 + t01 * s1)
            F[1, p, 0] = w * (t10 * s0 + t11 * s2)
            F[1, p, 1] = w * (t10 * s2 + t11 * s1)

    @njit(parallel=True, cache=True)
    def _flux3_nb(g, T, JW, C, F):
        npts = JW.shape[0]
        for p in prange(npts):
            # d[j][i] = du_i/dx_j
            d00 = T[p, 0, 0] * g[0, p, 0] + T[p, 1, 0] * g[1, p, 0] + T[p, 2, 0] * g[2, p, 0]
            d01 = T[p, 0, 0] * g[0, p, 1] + T[p, 1, 0] * g[1, p, 1] + T[p, 2, 0] * g[2, p, 1]
            d02 = T[p, 0, 0] * g[0, p, 2] + T[p, 1, 0] * g[1, p, 2] + T[p, 2, 0] * g[2, p, 2]
            d10 = T[p, 0, 1] * g[0, p, 0] + T[p, 1, 1] * g[1, p, 0] + T[p, 2, 1] * g[2, p, 0]
            d11 = T[p, 0, 1] * g[0, p, 1] + T[p, 1, 1] * g[1, p, 1] + T[p, 2, 1] * g[2, p, 1]
            d12 = T[p, 0, 1] * g[0, p, 2] + T[p, 1, 1] * g[1, p, 2] + T[p, 2, 1] * g[2, p, 2]
            d20 = T[p, 0, 2] * g[0, p, 0] + T[p, 1, 2] * g[1, p, 0] + T[p, 2, 2] * g[2, p, 0]
            d21 = T[p, 0, 2] * g[0, p, 1] + T[p, 1, 2] * g[1, p, 1] + T[p, 2, 2] * g[2, p, 1]
            d22 = T[p, 0, 2] * g[0, p, 2] + T[p, 1, 2] * g[1, p, 2] + T[p, 2, 2] * g[2, p, 2]
            e0 = d00
            e1 = d11
            e2 = d22
            e3 = d12 + d21
            e4 = d02 + d20
            e5 = d01 + d10
            s0 = C[p, 0, 0] * e0 + C[p, 0, 1] * e1 + C[p, 0, 2] * e2 + C[p, 0, 3] * e3 + C[p, 0, 4] * e4 + C[p, 0, 5] * e5
            s1 = C[p, 1, 0] * e0 + C[p, 1, 1] * e1 + C[p, 1, 2] * e2 + C[p, 1, 3] * e3 + C[p, 1, 4] * e4 + C[p, 1, 5] * e5
            s2 = C[p, 2, 0] * e0 + C[p, 2, 1] * e1 + C[p, 2, 2] * e2 + C[p, 2, 3] * e3 + C[p, 2, 4] * e4 + C[p, 2, 5] * e5
            s3 = C[p, 3, 0] * e0 + C[p, 3, 1] * e1 + C[p, 3, 2] * e2 + C[p, 3, 3] * e3 + C[p, 3, 4] * e4 + C[p, 3, 5] * e5
            s4 = C[p, 4, 0] * e0 + C[p, 4, 1] * e1 + C[p, 4, 2] * e2 + C[p, 4, 3] * e3 + C[p, 4, 4] * e4 + C[p, 4, 5] * e5
            s5 = C[p, 5, 0] * e0 + C[p, 5, 1] * e1 + C[p, 5, 2] * e2 + C[p, 5, 3] * e3 + C[p, 5, 4] * e4 + C[p, 5, 5] * e5
            w = JW[p]
            for k in range(3):
                tk0 = T[p, k, 0]
                tk1 = T[p, k, 1]
                tk2 = T[p, k, 2]
                F[k, p, 0] = w * (tk0 * s0 + tk1 * s5 + tk2 * s4)
                F[k, p, 1] = w * (tk0 * s5 + tk1 * s1 + tk2 * s3)
                F[k, p, 2] = w * (tk0 * s4 + tk1 * s3 + tk2 * s2)

    @njit(cache=True)
    def _scatter_add_nb(out, ids, vals):
        m, c = vals.shape
        for idx in range(m):
            r = ids[idx]
            for q in range(c):
                out[r, q] += vals[idx, q]


# --------------------------------------------------------------------------
# dispatch


def axis_apply(op, x, axis, out=None, accumulate=False):
    """Apply the 1D operator ``op`` along ``axis`` of ``x``.

    With ``accumulate`` the result is added into ``out`` instead of replacing it.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if out is None:
        out = np.zeros_like(x) if accumulate else np.empty_like(x)
    if x.shape[axis] != op.n:
        raise ValueError(f"operator size {op.n} does not match axis length {x.shape[axis]}")
    if not out.flags.c_contiguous or out.shape != x.shape:
        raise ValueError("out must be C-contiguous with the shape of x")
    if _active == "numba":
        shape3 = _split(x.shape, axis)
        small = {2: _csr_axis_nb_post2, 3: _csr_axis_nb_post3}.get(shape3[2])
        if small is not None:
            lo, hi, off, coef = op.stencil
            small(op.indptr, op.indices, op.data, lo, hi, off, coef,
                  x.reshape(shape3), out.reshape(shape3), accumulate)
        else:
            _csr_axis_nb(op.indptr, op.indices, op.data, x.reshape(shape3), out.reshape(shape3), accumulate)
        return out
    return _axis_apply_np(op, x, axis, out, accumulate)


def stress_flux(g, T, JW, C, out=None):
    """Pointwise strain -> stress -> flux stage.

    ``g[k', p, i'] = D_k'^+ u_i'`` at node ``p``; returns
    ``F[k, p, i] = JW_p T_kj sigma_ij`` with ``sigma = C(strain)`` in Voigt form.
    """
    d = g.shape[0]
    if out is None:
        out = np.empty_like(g)
    if _active == "numba":
        (_flux2_nb if d == 2 else _flux3_nb)(g, T, JW, C, out)
        return out
    return _flux_np(g, T, JW, C, out)


def scatter_add(out, ids, vals):
    """``out[ids[m], :] += vals[m, :]`` with repeated ids accumulated."""
    if _active == "numba":
        _scatter_add_nb(out, ids, vals)
        return out
    return _scatter_add_np(out, ids, vals)
