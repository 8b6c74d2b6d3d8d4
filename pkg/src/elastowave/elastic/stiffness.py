"""Stiffness matrices in Voigt notation.

Voigt order is ``(11, 22, 33, 23, 13, 12)`` with engineering shear strains
``(2 e23, 2 e13, 2 e12)``.  Plane-strain 2D matrices keep rows/columns
``(11, 22, 12)`` of the 3D matrix.
"""
import numpy as np

VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))
PLANE_STRAIN_INDEX = (0, 1, 5)


def _voigt_index():
    idx = np.zeros((3, 3), dtype=int)
    for a, (i, j) in enumerate(VOIGT_PAIRS):
        idx[i, j] = idx[j, i] = a
    return idx


VOIGT_INDEX = _voigt_index()


def voigt_to_tensor(C):
    """6x6 Voigt matrix -> 3x3x3x3 tensor ``C_ijkl``."""
    C = np.asarray(C, dtype=float)
    I = VOIGT_INDEX
    return C[I[:, :, None, None], I[None, None, :, :]]


def tensor_to_voigt(Ct):
    Ct = np.asarray(Ct, dtype=float)
    out = np.empty((6, 6))
    for a, (i, j) in enumerate(VOIGT_PAIRS):
        for b, (k, l) in enumerate(VOIGT_PAIRS):
            out[a, b] = Ct[i, j, k, l]
    return out


def lame_parameters(vp, vs, rho):
    return rho * (vp ** 2 - 2 * vs ** 2), rho * vs ** 2


def isotropic_stiffness(vp, vs, rho, dim=3):
    """Voigt matrix of an isotropic medium (``lambda = rho(vp^2 - 2 vs^2)``, ``mu = rho vs^2``).

    Requires ``vp > sqrt(2) vs > 0``; the boundary case ``lambda = 0`` is
    reachable through :func:`isotropic_from_lame`.
    """
    if not (vs > 0 and rho > 0):
        raise ValueError("vs and rho must be positive")
    if not vp > np.sqrt(2.0) * vs:
        raise ValueError(f"need vp > sqrt(2) vs (lambda > 0); got vp={vp}, vs={vs}")
    lam, mu = lame_parameters(vp, vs, rho)
    return isotropic_from_lame(lam, mu, dim)


def isotropic_from_lame(lam, mu, dim=3):
    if not mu > 0:
        raise ValueError("mu must be positive")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    C = np.zeros((6, 6))
    C[:3, :3] = lam
    C[[0, 1, 2], [0, 1, 2]] = lam + 2 * mu
    C[[3, 4, 5], [3, 4, 5]] = mu
    return plane_strain(C) if dim == 2 else C


def plane_strain(C6):
    i = np.array(PLANE_STRAIN_INDEX)
    return np.asarray(C6, dtype=float)[np.ix_(i, i)]


def thomsen_vti(vp, vs, rho, eps, gamma, delta):
    """VTI Voigt matrix (symmetry axis x3) from Thomsen parameters, exact ``C13`` relation."""
    c33 = rho * vp ** 2
    c44 = rho * vs ** 2
    c11 = c33 * (1 + 2 * eps)
    c66 = c44 * (1 + 2 * gamma)
    rad = (c33 - c44) ** 2 + 2 * delta * c33 * (c33 - c44)
    if rad < 0:
        raise ValueError(f"delta={delta} gives a complex C13")
    c13 = -c44 + np.sqrt(rad)
    c12 = c11 - 2 * c66
    C = np.array([
        [c11, c12, c13, 0, 0, 0],
        [c12, c11, c13, 0, 0, 0],
        [c13, c13, c33, 0, 0, 0],
        [0, 0, 0, c44, 0, 0],
        [0, 0, 0, 0, c44, 0],
        [0, 0, 0, 0, 0, c66],
    ], dtype=float)
    check_positive_definite(C)
    return C


def tilt_rotation(tilt, azimuth):
    """Rotation taking the x3 axis to ``(sin a cos b, sin a sin b, cos a)``."""
    ca, sa = np.cos(tilt), np.sin(tilt)
    cb, sb = np.cos(azimuth), np.sin(azimuth)
    Ry = np.array([[ca, 0, sa], [0, 1, 0], [-sa, 0, ca]])
    Rz = np.array([[cb, -sb, 0], [sb, cb, 0], [0, 0, 1]])
    return Rz @ Ry


def bond_matrix(R):
    """6x6 Bond stress-transformation matrix ``M`` with ``C' = M C M^T``."""
    R = np.asarray(R, dtype=float)
    M = np.zeros((6, 6))
    for a, (i, j) in enumerate(VOIGT_PAIRS):
        for b, (k, l) in enumerate(VOIGT_PAIRS):
            if b < 3:
                M[a, b] = R[i, k] * R[j, l]
            else:
                M[a, b] = R[i, k] * R[j, l] + R[i, l] * R[j, k]
    return M


def rotate_stiffness(C, R):
    """Rotate a Voigt stiffness by the rotation ``R`` (Bond transformation)."""
    M = bond_matrix(R)
    out = M @ np.asarray(C, float) @ M.T
    return 0.5 * (out + out.T)


def rotate_tensor(Ct, R):
    """Full-tensor rotation ``C'_ijkl = R_ia R_jb R_kc R_ld C_abcd`` (independent oracle)."""
    return np.einsum("ia,jb,kc,ld,abcd->ijkl", R, R, R, R, Ct)


def tti_stiffness(vp, vs, rho, eps, gamma, delta, tilt, azimuth, degrees=True):
    """Thomsen VTI matrix rotated so its symmetry axis has the given tilt and azimuth."""
    if degrees:
        tilt, azimuth = np.radians(tilt), np.radians(azimuth)
    C = rotate_stiffness(thomsen_vti(vp, vs, rho, eps, gamma, delta), tilt_rotation(tilt, azimuth))
    check_positive_definite(C)
    return C


def check_positive_definite(C, what="stiffness"):
    C = np.asarray(C, float)
    if not np.allclose(C, np.swapaxes(C, -1, -2), rtol=1e-12, atol=0):
        raise ValueError(f"{what} matrix is not symmetric")
    ev = np.linalg.eigvalsh(C)
    if np.any(ev <= 0):
        raise ValueError(f"{what} matrix is not positive definite (min eigenvalue {ev.min():.3e})")
    return ev


def tensor_9x9(Ct):
    """``C_ijkl`` reshaped to the symmetric 9x9 operator on 3x3 matrices."""
    return np.asarray(Ct, float).reshape(9, 9)


def christoffel(C6, normal):
    """``S = N C N^T`` for a unit ``normal`` (3D Voigt or 2D plane strain)."""
    n = np.asarray(normal, dtype=float)
    C6 = np.asarray(C6, dtype=float)
    if C6.shape[-1] == 6:
        n1, n2, n3 = n[..., 0], n[..., 1], n[..., 2]
        z = np.zeros_like(n1)
        N = np.stack([
            np.stack([n1, z, z, z, n3, n2], -1),
            np.stack([z, n2, z, n3, z, n1], -1),
            np.stack([z, z, n3, n2, n1, z], -1),
        ], -2)
    else:
        n1, n2 = n[..., 0], n[..., 1]
        z = np.zeros_like(n1)
        N = np.stack([
            np.stack([n1, z, n2], -1),
            np.stack([z, n2, n1], -1),
        ], -2)
    return N @ C6 @ np.swapaxes(N, -1, -2)


def impedance_matrix(C6, rho, normal, floor=1e-12):
    """Principal square root ``(rho S)^{1/2}`` of the scaled Christoffel matrix.

    Eigenvalues below ``floor * trace`` are rejected rather than clamped.
    """
    S = christoffel(C6, normal) * np.asarray(rho, float)[..., None, None]
    w, V = np.linalg.eigh(S)
    tr = np.trace(S, axis1=-2, axis2=-1)
    if np.any(w <= floor * tr[..., None]):
        raise ValueError("Christoffel matrix is not positive definite")
    return (V * np.sqrt(w)[..., None, :]) @ np.swapaxes(V, -1, -2)
