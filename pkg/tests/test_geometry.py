"""Mappings, analytic Jacobians, metric fields, stretching and topography."""
import numpy as np
import pytest

from elastowave import geometry as geo
from elastowave import sbp


def random_points(d, n=50, seed=0, lo=-1.0, hi=1.0):
    return np.random.default_rng(seed).uniform(lo, hi, size=(n, d))


# ---------------------------------------------------------------- affine mappings


def test_identity_metrics():
    m = geo.metrics(geo.identity(2), random_points(2))
    np.testing.assert_allclose(m.J, 1.0)
    np.testing.assert_allclose(m.T, np.broadcast_to(np.eye(2), m.T.shape))


def test_scaling_3d():
    m = geo.metrics(geo.scaling([2.0, 2.0, 2.0]), random_points(3))
    np.testing.assert_allclose(m.J, 8.0)
    np.testing.assert_allclose(m.T, np.broadcast_to(np.eye(3) / 2, m.T.shape))


def test_shear_metrics():
    alpha = 0.3
    m = geo.metrics(geo.shear2d(alpha), random_points(2))
    np.testing.assert_allclose(m.J, 1.0)
    np.testing.assert_allclose(m.T[0], [[1.0, -alpha], [0.0, 1.0]])


def test_orientation_reversing_rejected():
    with pytest.raises(ValueError):
        geo.metrics(geo.scaling([1.0, -1.0]), random_points(2))


def test_compose_chain_rule():
    comp = geo.Compose(geo.rotation2d(0.4), geo.shear2d(0.2))
    xi = random_points(2, seed=3)
    np.testing.assert_allclose(comp.jacobian(xi), geo.numeric_jacobian(comp, xi), atol=1e-8)


# ---------------------------------------------------------------- oblique half-plane


def test_oblique_surface_point():
    m = geo.oblique_halfplane(10.0)
    pt = m.surface_point(600.0)
    np.testing.assert_allclose(pt, [600 * np.cos(np.radians(10)), 600 * np.sin(np.radians(10))], rtol=1e-12)
    assert pt == pytest.approx([591, 104], abs=0.5)
    assert np.hypot(*pt) == pytest.approx(600.0, rel=1e-12)


def test_oblique_surface_normal_orthogonal_to_surface():
    m = geo.oblique_halfplane(10.0)
    tangent = m.surface_point(1.0) - m.surface_point(0.0)
    assert abs(tangent @ m.surface_normal) < 1e-12
    xi = np.array([[s, 0.0] for s in np.linspace(-200, 800, 7)])
    met = geo.metrics(m, xi[None, :, :].transpose(1, 0, 2))
    np.testing.assert_allclose(met.face_normal(1, +1), np.broadcast_to(m.surface_normal, (7, 2)), atol=1e-12)


def test_oblique_zero_angle_is_identity():
    m = geo.oblique_halfplane(0.0)
    xi = random_points(2, lo=-500, hi=0)
    np.testing.assert_allclose(m(xi), xi, atol=1e-12)


def test_oblique_rotation_constant_jacobian():
    m = geo.oblique_halfplane(20.0, mode="rotation")
    met = geo.metrics(m, random_points(2, lo=-1000, hi=0))
    np.testing.assert_allclose(met.J, 1.0, rtol=1e-14)


@pytest.mark.parametrize("angle", [45.0, -50.0])
def test_oblique_angle_limit(angle):
    with pytest.raises(ValueError):
        geo.oblique_halfplane(angle)


@pytest.mark.parametrize("mode", ["shear", "rotation"])
def test_oblique_jacobian_matches_numeric(mode):
    m = geo.oblique_halfplane(10.0, mode=mode)
    xi = random_points(2, seed=5, lo=-1400, hi=0)
    np.testing.assert_allclose(m.jacobian(xi), geo.numeric_jacobian(m, xi), atol=1e-6)


# ---------------------------------------------------------------- stretching


def test_stretch_strength_one_is_identity():
    s = geo.boundary_stretching(0, 1.0, 0.1)
    u = np.linspace(0, 1, 101)
    np.testing.assert_allclose(s.value(u), u, atol=1e-15)
    np.testing.assert_allclose(s.deriv(u), 1.0)


def test_stretch_endpoints_and_monotone():
    s = geo.boundary_stretching(0, 3.0, 0.1)
    u = np.linspace(0, 1, 10_000)
    assert s.value(0.0) == pytest.approx(0.0, abs=1e-15)
    assert s.value(1.0) == pytest.approx(1.0, abs=1e-15)
    assert np.all(s.deriv(u) > 0)
    assert np.all(np.diff(s.value(u)) > 0)


def test_stretch_spacing_ratio():
    # compression of 3 at the ends: the boundary spacing is about 1/3 of the mid spacing
    s = geo.boundary_stretching(0, 3.0, 0.1)
    x = s.value(np.linspace(0, 1, 1001))
    dx = np.diff(x)
    assert dx.min() / dx[len(dx) // 2] == pytest.approx(1 / 3, rel=0.02)


def test_stretch_derivative_matches_finite_difference():
    s = geo.boundary_stretching(0, 2.5, 0.15, open_ends=(0.5,), expansion=1.5)
    u = np.linspace(0.01, 0.99, 97)
    fd = (s.value(u + 1e-6) - s.value(u - 1e-6)) / 2e-6
    np.testing.assert_allclose(s.deriv(u), fd, rtol=1e-7)


@pytest.mark.parametrize("kw", [dict(strength=0.5, width=0.1), dict(strength=2.0, width=0.0)])
def test_stretch_validation(kw):
    with pytest.raises(ValueError):
        geo.boundary_stretching(0, **kw)


# ---------------------------------------------------------------- topography and layered blocks


def test_zero_amplitude_is_flat():
    surf = geo.gaussian_topography(7, 0.0, 5, ((0, 1000), (0, 1000)), base=-10.0)
    xh = random_points(2, lo=0, hi=1000)
    np.testing.assert_allclose(surf.value(xh), -10.0)
    np.testing.assert_allclose(surf.grad(xh), 0.0)


def test_topography_deterministic():
    a = geo.gaussian_topography(42, 50.0, 6, ((0, 1000), (0, 800)))
    b = geo.gaussian_topography(42, 50.0, 6, ((0, 1000), (0, 800)))
    c = geo.gaussian_topography(43, 50.0, 6, ((0, 1000), (0, 800)))
    xh = random_points(2, lo=0, hi=800)
    assert np.array_equal(a.value(xh), b.value(xh))
    assert not np.array_equal(a.value(xh), c.value(xh))


def test_topography_gradient_matches_finite_difference():
    surf = geo.gaussian_topography(3, 40.0, 4, ((0, 1000), (0, 1000)))
    xh = random_points(2, lo=100, hi=900)
    fd = np.stack([(surf.value(xh + e) - surf.value(xh - e)) / 2e-3 for e in np.eye(2) * 1e-3], axis=-1)
    np.testing.assert_allclose(surf.grad(xh), fd, rtol=1e-6, atol=1e-9)


def layered_pair(seed=11):
    ext = ((0.0, 1000.0), (0.0, 1000.0))
    top = geo.gaussian_topography(seed, 40.0, 5, ext, base=0.0)
    interface = top.scaled(0.5, base=-300.0)
    bottom = geo.FlatSurface(-700.0)
    upper = geo.LayerMapping(3, interface, top)
    lower = geo.LayerMapping(3, bottom, interface)
    return upper, lower


def test_layer_mapping_positive_jacobian_and_numeric_check():
    upper, lower = layered_pair()
    axes = [np.linspace(0, 1000, 9), np.linspace(0, 1000, 9), np.linspace(0, 1, 7)]
    xi = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    for m in (upper, lower):
        met = geo.metrics(m, xi)
        assert met.J.min() > 0
        np.testing.assert_allclose(m.jacobian(xi), geo.numeric_jacobian(m, xi), atol=1e-6)
        # T is the inverse of the Jacobian
        eye = np.einsum("...ij,...jk->...ik", met.T, met.jac)
        np.testing.assert_allclose(eye, np.broadcast_to(np.eye(3), eye.shape), atol=1e-12)


def test_layer_interface_faces_coincide():
    upper, lower = layered_pair()
    t = sbp.build_shifted_uniform(4, 11, 100.0)
    e = sbp.build_shifted_uniform(4, 9, 1 / 8)
    gu = geo.build_grid(upper, (t, t, e))
    gl = geo.build_grid(lower, (t, t, e))
    np.testing.assert_allclose(gu.x[:, :, 0], gl.x[:, :, -1], atol=1e-12)
    nu = gu.metrics().face_normal(2, -1)
    nl = gl.metrics().face_normal(2, +1)
    np.testing.assert_allclose(nu, -nl, atol=1e-12)


def test_stretched_layer_jacobian():
    upper, _ = layered_pair()
    st = geo.boundary_stretching(2, 3.0, 0.1)
    m = geo.LayerMapping(3, upper.bottom, upper.top, vertical=st)
    xi = np.stack(np.meshgrid(np.linspace(0, 1000, 5), np.linspace(0, 1000, 5), np.linspace(0, 1, 9),
                              indexing="ij"), axis=-1)
    np.testing.assert_allclose(m.jacobian(xi), geo.numeric_jacobian(m, xi), atol=1e-6)
    assert geo.metrics(m, xi).J.min() > 0


# ---------------------------------------------------------------- helpers


def test_invert_small_matches_numpy():
    rng = np.random.default_rng(2)
    for d in (2, 3):
        M = rng.standard_normal((20, d, d)) + 3 * np.eye(d)
        inv, det = geo.invert_small(M)
        np.testing.assert_allclose(inv, np.linalg.inv(M), rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(det, np.linalg.det(M), rtol=1e-12)


def test_face_names_round_trip():
    for name in geo.FACE_NAMES:
        assert geo.face_name(*geo.face_axis_side(name)) == name
    with pytest.raises(ValueError):
        geo.face_axis_side("top")


def test_mapping_from_config():
    m = geo.mapping_from_config("oblique", {"angle_deg": 10.0}, 2)
    assert m.surface_point(600.0)[1] == pytest.approx(104.19, abs=0.01)
    with pytest.raises(ValueError):
        geo.mapping_from_config("spiral", {}, 2)


def test_build_grid_dimension_mismatch():
    t = sbp.build_shifted_uniform(4, 11, 0.1)
    with pytest.raises(ValueError):
        geo.build_grid(geo.identity(3), (t, t))
