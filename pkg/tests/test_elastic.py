"""Elastic blocks: stiffness algebra, the curvilinear operator, interfaces, SEM and the time loop."""
import numpy as np
import pytest
import sympy as sp

from elastowave import geometry as geo
from elastowave import kernels
from elastowave import sbp
from elastowave import timestepping as ts
from elastowave import verify as vf
from elastowave import elastic as el
from elastowave.elastic import run as er
from elastowave.elastic import scenarios as sc
from elastowave.elastic import stiffness as stf
from elastowave.elastic.sem import sem_assembly

C_ISO2 = el.isotropic_stiffness(2.0, 1.0, 1.5, dim=2)


def grid2d(n=9, p=4, mapping=None, ext=((0.0, 1.0), (0.0, 1.0)), kind="shifted"):
    tr = [sbp.build_triplet(kind, n, p=p, a=a, b=b) for a, b in ext]
    return geo.build_grid(mapping or geo.identity(2), tr)


def wavy():
    # a smooth curvilinear map of the unit square
    bottom = geo.FlatSurface(0.0)
    top = geo.GaussianSurface(1.0, np.array([0.15]), np.array([[0.4]]), np.array([0.3]))
    return geo.LayerMapping(2, bottom, top)


def block(n=9, p=4, mapping=None, rho=1.5, C=C_ISO2, faces=None, ext=((0.0, 1.0), (0.0, 1.0))):
    return el.ElasticBlock(grid2d(n, p, mapping, ext), rho, C, faces or {})


def dense_E(asm):
    return vf.materialize(lambda v: asm.apply_E(v).ravel(), asm.dof)


# ---------------------------------------------------------------- stiffness algebra


def test_lame_parameters_of_half_plane_medium():
    lam, mu = el.lame_parameters(sc.LAMB_VP, sc.LAMB_VS, sc.LAMB_RHO)
    assert lam == pytest.approx(2200 * (3200 ** 2 - 2 * 1847.5 ** 2), rel=1e-15)
    assert mu == pytest.approx(2200 * 1847.5 ** 2, rel=1e-15)
    assert lam == pytest.approx(7.5097e9, rel=1e-4)
    assert mu == pytest.approx(7.5092e9, rel=1e-4)
    C = el.isotropic_stiffness(sc.LAMB_VP, sc.LAMB_VS, sc.LAMB_RHO, dim=2)
    assert np.sqrt(C[0, 0] / sc.LAMB_RHO) == pytest.approx(3200.0, rel=1e-14)
    assert np.sqrt(C[2, 2] / sc.LAMB_RHO) == pytest.approx(1847.5, rel=1e-14)


def test_isotropic_validation():
    with pytest.raises(ValueError):
        el.isotropic_stiffness(1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        el.isotropic_stiffness(2.0, 1.0, -1.0)


def test_voigt_tensor_involution_and_symmetries():
    C = el.tti_stiffness(**{k: v for k, v in sc.TTI_TOP.items()})
    Ct = el.voigt_to_tensor(C)
    np.testing.assert_array_equal(el.tensor_to_voigt(Ct), C)
    np.testing.assert_array_equal(Ct, Ct.transpose(1, 0, 2, 3))
    np.testing.assert_array_equal(Ct, Ct.transpose(0, 1, 3, 2))
    np.testing.assert_array_equal(Ct, Ct.transpose(2, 3, 0, 1))


@pytest.mark.parametrize("medium", [sc.TTI_TOP, sc.TTI_BOTTOM])
def test_tti_media_positive_definite(medium):
    C = el.tti_stiffness(**medium)
    assert np.linalg.eigvalsh(C).min() > 0


def test_thomsen_relations():
    vp, vs, rho, eps, gam, dl = 3000.0, 1600.0, 2000.0, 0.1, 0.2, 0.05
    C = el.thomsen_vti(vp, vs, rho, eps, gam, dl)
    C33, C44 = rho * vp ** 2, rho * vs ** 2
    assert C[2, 2] == pytest.approx(C33) and C[3, 3] == pytest.approx(C44)
    assert (C[0, 0] - C33) / (2 * C33) == pytest.approx(eps)
    assert (C[5, 5] - C44) / (2 * C44) == pytest.approx(gam)
    delta = ((C[0, 2] + C44) ** 2 - (C33 - C44) ** 2) / (2 * C33 * (C33 - C44))
    assert delta == pytest.approx(dl, rel=1e-12)


def test_zero_tilt_is_vti():
    m = dict(sc.TTI_BOTTOM, tilt=0.0, azimuth=0.0)
    vti = el.thomsen_vti(*(m[k] for k in ("vp", "vs", "rho", "eps", "gamma", "delta")))
    np.testing.assert_allclose(el.tti_stiffness(**m), vti, rtol=1e-14, atol=1e-6)


def test_bond_rotation_matches_tensor_rotation():
    C = el.thomsen_vti(3000.0, 1600.0, 2000.0, 0.2, 0.1, -0.05)
    R = el.tilt_rotation(0.7, -1.1)
    got = el.rotate_stiffness(C, R)
    oracle = el.tensor_to_voigt(el.rotate_tensor(el.voigt_to_tensor(C), R))
    np.testing.assert_allclose(got, oracle, rtol=1e-12, atol=1e-12 * np.abs(C).max())
    # rotation preserves the spectrum of the 9x9 operator
    e0 = np.linalg.eigvalsh(stf.tensor_9x9(el.voigt_to_tensor(C)))
    e1 = np.linalg.eigvalsh(stf.tensor_9x9(el.voigt_to_tensor(got)))
    np.testing.assert_allclose(e0, e1, rtol=1e-10, atol=1e-10 * e0.max())


def test_isotropic_christoffel_and_impedance():
    lam, mu = el.lame_parameters(2.0, 1.0, 1.5)
    C3 = el.isotropic_stiffness(2.0, 1.0, 1.5)
    n = np.array([1.0, 2.0, 2.0]) / 3.0
    np.testing.assert_allclose(el.christoffel(C3, n), mu * np.eye(3) + (lam + mu) * np.outer(n, n), atol=1e-14)
    rho = 1.5
    Z = el.impedance_matrix(C_ISO2, rho, np.array([0.0, 1.0]))
    np.testing.assert_allclose(Z, np.diag([rho * 1.0, rho * 2.0]), rtol=1e-14)


def test_tti_impedance_positive_definite_for_random_normals():
    C = el.tti_stiffness(**sc.TTI_TOP)
    nrm = np.random.default_rng(0).standard_normal((1000, 3))
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    Z = el.impedance_matrix(np.broadcast_to(C, (1000, 6, 6)), np.full(1000, 2000.0), nrm)
    assert np.linalg.eigvalsh(Z).min() > 0
    S = el.christoffel(C, nrm) * 2000.0
    np.testing.assert_allclose(Z @ Z, S, rtol=1e-10, atol=1e-6 * np.abs(S).max())


# ---------------------------------------------------------------- the block operator


def test_rigid_motions_are_annihilated():
    # constants on any mapping; the rotation is linear in xi only for affine maps
    scale = np.abs(block(mapping=wavy()).apply_E(np.random.default_rng(1).standard_normal((9, 9, 2)))).max()
    assert np.abs(block(mapping=wavy()).apply_E(np.ones((9, 9, 2)))).max() < 1e-12 * scale
    blk = block(mapping=geo.shear2d(0.3))
    x = blk.x
    assert np.abs(blk.apply_E(np.stack([-x[..., 1], x[..., 0]], axis=-1))).max() < 1e-12 * scale


def strain_energy_form(blk, u, v):
    """Independent evaluation of ``sum W J eps(v) : C : eps(u)`` with dense 1D operators."""
    Dx = blk.grid.triplets[0].dense()[0]
    Dy = blk.grid.triplets[1].dense()[0]

    def grad(w):
        g0 = np.einsum("ab,bci->aci", Dx, w)
        g1 = np.einsum("cb,abi->aci", Dy, w)
        T = blk.metric.T
        # du_i/dx_j = sum_k g_k,i T_kj
        return np.einsum("...i,...j->...ij", g0, T[..., 0, :]) + np.einsum("...i,...j->...ij", g1, T[..., 1, :])

    def voigt(G):
        return np.stack([G[..., 0, 0], G[..., 1, 1], G[..., 0, 1] + G[..., 1, 0]], axis=-1)

    eu, ev = voigt(grad(u)), voigt(grad(v))
    W = np.outer(blk.grid.triplets[0].h_weights, blk.grid.triplets[1].h_weights)
    return float(np.sum(W * blk.metric.J * np.einsum("...a,...ab,...b->...", ev, blk.stiffness, eu)))


def test_operator_equals_strain_energy_oracle():
    rng = np.random.default_rng(4)
    C = np.array([[4.0, 1.2, 0.3], [1.2, 3.0, -0.2], [0.3, -0.2, 1.1]])
    rho = 1.0 + rng.uniform(0, 1, (11, 11))
    blk = el.ElasticBlock(grid2d(11, 4, wavy()), rho, C)
    for _ in range(3):
        u, v = rng.standard_normal((2,) + blk.dims + (2,))
        lhs = -float(np.sum(v * blk.apply_E(u)))
        assert lhs == pytest.approx(strain_energy_form(blk, u, v), rel=1e-12)


def test_adjoint_consistency():
    rng = np.random.default_rng(5)
    blk = block(n=10, mapping=wavy())
    for _ in range(5):
        u, v = rng.standard_normal((2,) + blk.dims + (2,))
        a, b = np.sum(v * blk.apply_E(u)), np.sum(u * blk.apply_E(v))
        assert a == pytest.approx(b, rel=1e-12)


def test_block_operator_symmetric_semidefinite():
    asm = el.assemble([block(n=9, mapping=geo.shear2d(0.3))])
    E = dense_E(asm)
    assert vf.symmetry_defect(E) < 1e-13
    ev = np.linalg.eigvalsh(0.5 * (E + E.T))
    assert ev.max() < 1e-10 * np.abs(ev).max()
    # two translations and one rotation
    assert np.sum(ev > -1e-9 * np.abs(ev).max()) == 3


def test_interior_navier_fourth_order():
    rho = 1.5
    x1, x2 = sp.symbols("x1 x2", real=True)
    man = vf.manufactured_forcing(("elastic", rho, C_ISO2), (sp.sin(2 * x1 + x2), sp.cos(x1 - 2 * x2)))
    errs = []
    for n in (21, 41, 81):
        blk = block(n=n, rho=rho)
        x = blk.x
        u = man.solution(0.0, x)
        W = np.outer(blk.grid.triplets[0].h_weights, blk.grid.triplets[1].h_weights)
        div_sigma = blk.apply_E(u) / W[..., None]
        # static target: f = -div sigma
        interior = (slice(8, -8), slice(8, -8))
        errs.append(np.abs(div_sigma[interior] + man.forcing(0.0, x)[interior]).max())
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 3.7)


def test_backends_agree():
    C = el.tti_stiffness(**sc.TTI_TOP)
    top = geo.GaussianSurface(1.0, np.array([0.1]), np.array([[0.4, 0.6]]), np.array([0.3]))
    m = geo.LayerMapping(3, geo.FlatSurface(0.0), top)
    tr = [sbp.build_triplet("shifted", 13, p=6, a=0.0, b=1.0) for _ in range(3)]
    blk = el.ElasticBlock(geo.build_grid(m, tr), 2000.0, C)
    u = np.random.default_rng(6).standard_normal(blk.dims + (3,))
    prev = kernels.use_backend("numpy")
    try:
        a = blk.apply_E(u).copy()
        kernels.use_backend("numba")
        b = blk.apply_E(u).copy()
    finally:
        kernels.use_backend(prev)
    assert np.abs(a - b).max() <= 1e-12 * np.abs(a).max()
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")


def test_nonreflecting_matrix_isotropic_flat_face():
    blk = block(n=9, faces={"ymax": el.NonReflectingFace()})
    M = blk.nonreflecting_matrix("ymax")
    w = blk.surface_weights("ymax")
    np.testing.assert_allclose(w, blk.grid.triplets[0].h_weights)
    np.testing.assert_allclose(M, w[:, None, None] * np.diag([1.5 * 1.0, 1.5 * 2.0]), rtol=1e-13)


# ---------------------------------------------------------------- multiblock assembly


def two_blocks(rho=(1.5, 1.5), C=(C_ISO2, C_ISO2), n=9, mapping=None):
    m = mapping or geo.identity(2)
    lo = el.ElasticBlock(grid2d(n, 4, m, ((0.0, 1.0), (0.0, 0.5))), rho[0], C[0],
                         {"ymax": el.InterfaceFace(1, "ymin")})
    hi = el.ElasticBlock(grid2d(n, 4, m, ((0.0, 1.0), (0.5, 1.0))), rho[1], C[1],
                         {"ymin": el.InterfaceFace(0, "ymax")})
    return lo, hi


def glued_by_coordinates(blocks):
    """``P^T diag(E_1, E_2) P`` with the scatter ``P`` built by matching coordinates."""
    xs = [b.x.reshape(-1, 2) for b in blocks]
    keys, gid = {}, []
    for x in xs:
        ids = []
        for pt in np.round(x, 10):
            ids.append(keys.setdefault(tuple(pt), len(keys)))
        gid.append(np.array(ids))
    n = len(keys)
    E = np.zeros((2 * n, 2 * n))
    M = np.zeros(n)
    for b, g in zip(blocks, gid):
        Eb = vf.materialize(lambda v, b=b: b.apply_E(v.reshape(b.dims + (2,))).ravel(), b.npts * 2)
        idx = np.stack([2 * g, 2 * g + 1], axis=1).ravel()
        E[np.ix_(idx, idx)] += Eb
        np.add.at(M, g, b.mass)
    return E, M, np.array(sorted(keys, key=keys.get))


def test_two_blocks_equal_glued_blocks():
    lo, hi = two_blocks(mapping=wavy())
    asm = el.assemble([lo, hi])
    E, M, X = glued_by_coordinates([lo, hi])
    # align the assembly numbering with the coordinate numbering
    order = [asm.locate(x)[0] for x in X]
    idx = np.stack([2 * np.array(order), 2 * np.array(order) + 1], axis=1).ravel()
    Ea = dense_E(asm)[np.ix_(idx, idx)]
    assert np.abs(Ea - E).max() < 1e-11 * np.abs(E).max()
    np.testing.assert_allclose(asm.mass[order], M, rtol=1e-14)
    assert asm.n_nodes == 9 * 17


def test_density_and_stiffness_jump_stays_symmetric():
    C2 = el.isotropic_stiffness(3.0, 1.4, 2.5, dim=2)
    lo, hi = two_blocks(rho=(1.5, 2.5), C=(C_ISO2, C2), mapping=wavy())
    asm = el.assemble([lo, hi])
    E = dense_E(asm)
    ok, sym, ratio = vf.check_symmetric_nsd(E, asm.translations())
    assert ok and sym < 1e-12
    A = vf.materialize(asm.system().apply_A, asm.dof)
    np.testing.assert_allclose(A, -E, atol=1e-14 * np.abs(E).max())


def test_non_reciprocal_interface_rejected():
    lo, hi = two_blocks()
    hi.faces["ymin"] = el.InterfaceFace(0, "xmax")
    with pytest.raises(el.InterfaceError, match="reciprocal"):
        el.assemble([lo, hi])


def test_non_coincident_interface_rejected():
    lo = el.ElasticBlock(grid2d(9, 4, None, ((0.0, 1.0), (0.0, 0.5))), 1.0, C_ISO2,
                         {"ymax": el.InterfaceFace(1, "ymin")})
    hi = el.ElasticBlock(grid2d(11, 4, None, ((0.0, 1.0), (0.5, 1.0))), 1.0, C_ISO2,
                         {"ymin": el.InterfaceFace(0, "ymax")})
    with pytest.raises(el.InterfaceError):
        el.assemble([lo, hi])


def test_dirichlet_faces_make_operator_definite():
    blk = block(n=9, mapping=wavy(), faces={"xmin": el.DirichletFace(), "ymin": el.DirichletFace()})
    asm = el.assemble([blk])
    sysm = asm.system()
    A = vf.materialize(sysm.apply_A, sysm.dof)
    assert sysm.dof == 2 * (9 * 9 - 17)
    assert vf.symmetry_defect(A) < 1e-13
    assert np.linalg.eigvalsh(A).min() > 0


# ---------------------------------------------------------------- spectral elements


def test_sem_mass_and_single_cell():
    asm = sem_assembly((2, 3), 5, ((0.0, 2.0), (0.0, 3.0)), 1.5, C_ISO2)
    assert asm.n_nodes == (2 * 4 + 1) * (3 * 4 + 1)
    assert asm.mass.sum() == pytest.approx(1.5 * 6.0, rel=1e-13)
    one = sem_assembly((1, 1), 6, ((0.0, 1.0), (0.0, 1.0)), 1.5, C_ISO2)
    tr = [sbp.build_gll(6, 0.0, 1.0) for _ in range(2)]
    ref = el.ElasticBlock(geo.build_grid(geo.identity(2), tr), 1.5, C_ISO2)
    u = np.random.default_rng(7).standard_normal(ref.dims + (2,))
    np.testing.assert_allclose(one.apply_E(u.reshape(-1, 2)).ravel(), ref.apply_E(u).ravel(), rtol=1e-13)


def test_sem_operator_symmetric_semidefinite():
    asm = sem_assembly((2, 2), 4, ((0.0, 1.0), (0.0, 1.0)), 1.0, C_ISO2)
    ok, sym, _ = vf.check_symmetric_nsd(dense_E(asm), asm.translations())
    assert ok and sym < 1e-13


# ---------------------------------------------------------------- sources and the time loop


def test_explosion_exerts_no_net_force():
    asm = el.assemble([block(n=11, mapping=wavy())])
    P = er.Explosion(0, (5, 10), 1e3, 10.0).pattern(asm)
    assert np.abs(P).max() > 0
    np.testing.assert_allclose(P.sum(axis=0), 0.0, atol=1e-9)


def test_point_force_pattern():
    asm = el.assemble([block(n=9)])
    P = er.PointForce(4, [0.0, -2.0], 10.0).pattern(asm)
    assert P[4].tolist() == [0.0, -2.0] and np.count_nonzero(P) == 1


def test_zero_wavelet_gives_zero_traces():
    asm = el.assemble([block(n=9)])
    rec = [er.receiver_at(asm, "r", [0.5, 1.0])]
    res = er.run(asm, [er.PointForce(40, [0.0, 1.0], lambda t: 0.0)], rec, duration=0.05)
    assert res.traces["r"].shape[1] == 2
    assert not np.any(res.traces["r"])


def test_free_surface_energy_conserved():
    asm = el.assemble([block(n=12, mapping=wavy())])
    sysm = asm.system()
    dt = ts.stable_dt(ts.lambda_max(sysm, method="lanczos"), 0.1)
    x = asm.x
    u0 = np.stack([np.exp(-20 * ((x[:, 0] - 0.5) ** 2 + (x[:, 1] - 0.5) ** 2))] * 2, axis=1).ravel()
    st = ts.Stepper(sysm, dt, ts.StepperState(u0, u0, 1, dt))
    e0 = ts.discrete_energy(sysm, st.state)
    worst = 0.0
    for _ in range(20):
        st.run(100)
        worst = max(worst, abs(ts.discrete_energy(sysm, st.state) - e0) / e0)
    assert worst < 1e-10


def test_run_sampling_and_snapshots():
    asm = el.assemble([block(n=9)])
    rec = [er.receiver_at(asm, "r", [0.5, 1.0], components=(1,))]
    src = [er.PointForce(asm.locate([0.5, 0.5])[0], [0.0, 1.0], 8.0)]
    res = er.run(asm, src, rec, duration=0.2, dt=0.01, stride=2, snapshot_times=(0.1,), record_energy=True)
    np.testing.assert_allclose(res.times, np.arange(2, 21, 2) * 0.01)
    assert res.traces["r"].shape == (10, 1)
    assert len(res.snapshots) == 1 and res.snapshots[0][0] == pytest.approx(0.1)
    assert res.energy.shape == (10,) and res.energy[-1] > 0


def test_lamb_scenario_geometry():
    s = sc.lamb(level=0, nodes=(31, 21), extent=((-180.0, 180.0), (-240.0, 0.0)), receiver_offsets=(120.0,),
                angle_deg=10.0)
    pt = s.assembly.x[s.receivers[0].node]
    assert s.receivers[0].snap_distance < 1e-9
    assert np.hypot(*pt) == pytest.approx(120.0, rel=1e-12)
    np.testing.assert_allclose(s.sources[0].vector / np.linalg.norm(s.sources[0].vector), -s.info["normal"])
