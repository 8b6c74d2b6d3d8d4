"""SBP operator triplets: tabulated p=4 closure, derived closures, symmetric and GLL operators."""
from fractions import Fraction as F
import io

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from elastowave import sbp


# ---------------------------------------------------------------- shifted p=4


def test_p4_interior_row_matches_table():
    t = sbp.build_shifted_uniform(4, 12, 1.0)
    Dp, _, _ = t.exact_matrices()
    n = 6  # an interior row (0-based)
    row = Dp[n]
    expected = {-1: F(-1, 4), 0: F(-5, 6), 1: F(3, 2), 2: F(-1, 2), 3: F(1, 12)}
    for j in range(12):
        assert row[j] == expected.get(j - n, 0)


def test_p4_first_row_matches_table():
    t = sbp.build_shifted_uniform(4, 12, 1.0)
    Dp, _, _ = t.exact_matrices()
    assert Dp[0] == [F(-59, 42), F(12, 7), F(-3, 14), F(-2, 21)] + [F(0)] * 8


def test_p4_weights_match_table():
    h = 0.25
    t = sbp.build_shifted_uniform(4, 12, h)
    w = np.array([49 / 144, 61 / 48, 41 / 48, 149 / 144] + [1.0] * 4 + [149 / 144, 41 / 48, 61 / 48, 49 / 144])
    np.testing.assert_allclose(t.h_weights, w * h, rtol=1e-15)
    assert np.all(t.h_weights > 0)


def test_p4_identity_exact_in_rationals():
    t = sbp.build_shifted_uniform(4, 12, 1.0)
    assert sbp.exact_identity_residual(t) == 0


def test_spacing_scales_coefficients():
    a = sbp.build_shifted_uniform(4, 12, 1.0).dense()
    b = sbp.build_shifted_uniform(4, 12, 0.5).dense()
    np.testing.assert_allclose(b[0], a[0] / 0.5, rtol=1e-15)
    np.testing.assert_allclose(b[1], a[1] / 0.5, rtol=1e-15)
    np.testing.assert_allclose(b[2], a[2] * 0.5, rtol=1e-15)


def test_q_signature():
    t = sbp.build_shifted_uniform(4, 12, 1.0)
    assert t.q_signature[0] == -1 and t.q_signature[-1] == 1 and not np.any(t.q_signature[1:-1])


@pytest.mark.parametrize("p", [4, 6, 8])
def test_builder_rejects_small_grids(p):
    with pytest.raises(ValueError):
        sbp.build_shifted_uniform(p, 2 * p, 1.0)


def test_unsupported_order():
    with pytest.raises(ValueError):
        sbp.build_shifted_uniform(5, 40, 1.0)
    with pytest.raises(ValueError):
        sbp.build_shifted_uniform(10, 40, 1.0)


# ---------------------------------------------------------------- invariants, all uniform kinds


@settings(max_examples=30, deadline=None)
@given(p=st.sampled_from([4, 6, 8]), kind=st.sampled_from(["shifted", "symmetric"]),
       extra=st.integers(1, 30), h=st.floats(1e-3, 10.0))
def test_uniform_invariants(p, kind, extra, h):
    n = 2 * p + extra
    t = sbp.build_triplet(kind, n, p=p, a=0.0, spacing=h)
    Dp, Dm, H, Q = t.dense()
    # SBP identity
    assert np.abs(H @ Dp + Dm.T @ H - Q).max() < 1e-13 / h
    # constants are annihilated
    one = np.ones(n)
    assert np.abs(Dp @ one).max() < 1e-11 / h
    assert np.abs(Dm @ one).max() < 1e-11 / h
    # mirror rule d+_i(j) = -d-_{N-i+1}(N-j+1)
    J = np.arange(n)[::-1]
    assert np.abs(Dp + Dm[np.ix_(J, J)]).max() <= 1e-13 * np.abs(Dp).max()
    assert np.all(t.h_weights > 0)


@pytest.mark.parametrize("kind", ["shifted", "symmetric"])
@pytest.mark.parametrize("p", [4, 6, 8])
def test_order_certificates(kind, p):
    t = sbp.build_triplet(kind, 4 * p + 1, p=p, a=0.0, b=1.0)
    rep = sbp.verify_triplet(t)
    orders = rep["per_row_order"]
    r = p  # closure rows
    assert np.all(orders[r:-r] >= p)
    assert np.all(orders >= p // 2)
    assert rep["mirror_ok"]
    assert rep["identity_residual_exact"] == 0


def test_verify_triplet_p4_report():
    rep = sbp.verify_triplet(sbp.build_shifted_uniform(4, 20, 1.0))
    assert rep["identity_residual_exact"] == 0
    assert rep["identity_residual"] < 1e-14
    assert np.all(rep["per_row_order"][4:-4] == 4)
    assert np.all(rep["per_row_order"][:4] >= 2)


# ---------------------------------------------------------------- symmetric


def test_symmetric_interior_row_and_single_operator():
    t = sbp.build_symmetric_uniform(4, 20, 1.0)
    Dp, Dm, _ = t.exact_matrices()
    n = 10
    expected = {-2: F(1, 12), -1: F(-2, 3), 1: F(2, 3), 2: F(-1, 12)}
    assert [Dp[n][j] for j in range(20)] == [expected.get(j - n, F(0)) for j in range(20)]
    # the classical operator uses one matrix D for both slots: H D + D^T H = Q
    Dpf, Dmf, H, Q = t.dense()
    np.testing.assert_array_equal(Dmf, Dpf)
    assert all(Dm[i][j] == Dp[i][j] for i in range(20) for j in range(20))
    assert np.abs(H @ Dpf + Dpf.T @ H - Q).max() < 1e-13


def test_symmetric_exact_on_linear_functions():
    t = sbp.build_symmetric_uniform(4, 20, 0.1)
    Dp = t.dense()[0]
    np.testing.assert_allclose(Dp @ t.nodes, 1.0, rtol=0, atol=1e-12)


def test_symmetric_mirror_ok():
    assert sbp.verify_triplet(sbp.build_symmetric_uniform(4, 20, 1.0))["mirror_ok"]


# ---------------------------------------------------------------- derive_closure


def test_derive_p4_reproduces_published_table_under_pin():
    sol = sbp.derive_closure(4, "shifted", pins=sbp.P4_PUBLISHED_PIN)
    assert sol.same_coefficients(sbp.published_p4_closure())
    assert sol.residuals["identity"] == 0 and sol.residuals["accuracy"] == 0
    assert sol.boundary_weights == (F(49, 144), F(61, 48), F(41, 48), F(149, 144))


def test_derive_p4_free_parameter_count():
    sol = sbp.derive_closure(4, "shifted")
    assert sol.free_parameter_report["count"] >= 1
    assert all(w > 0 for w in sol.boundary_weights)


def test_derive_p4_symmetric_exact_to_degree_two():
    sol = sbp.derive_closure(4, "symmetric")
    Dp, _, _ = sbp.rational_matrices(sol, 20)
    for i in range(sol.closure_size):
        for k in range(3):
            val = sum(Dp[i][j] * F(j) ** k for j in range(20))
            assert val == (k * F(i) ** (k - 1) if k else 0)


def test_derive_p6_shifted():
    sol = sbp.derive_closure(6, "shifted")
    assert sol.residuals["identity"] < 1e-12 and sol.residuals["accuracy"] < 1e-12
    assert all(w > 0 for w in sol.boundary_weights)
    t = sbp.build_shifted_uniform(6, 30, 1.0)
    orders = sbp.verify_triplet(t)["per_row_order"]
    assert np.all(orders[:6] >= 3)


def test_shipped_catalogs_match_derivation():
    for p in (6, 8):
        for kind in ("shifted", "symmetric"):
            assert sbp.closure_for(p, kind).same_coefficients(sbp.derive_closure(p, kind))


def test_catalog_round_trip():
    sol = sbp.derive_closure(6, "shifted")
    buf = io.StringIO()
    sbp.write_catalog(sol, buf)
    text = buf.getvalue()
    assert text.startswith("# order 6\n# kind shifted\n# identity_residual")
    assert sbp.parse_catalog(text).same_coefficients(sol)


def test_catalog_rejects_mismatched_stencil():
    buf = io.StringIO()
    sbp.write_catalog(sbp.derive_closure(4, "symmetric"), buf)
    text = buf.getvalue().replace("# kind symmetric", "# kind shifted")
    with pytest.raises(ValueError):
        sbp.parse_catalog(text)


# ---------------------------------------------------------------- GLL


def test_gll_three_nodes():
    t = sbp.build_gll(3)
    np.testing.assert_allclose(t.nodes, [-1, 0, 1], atol=1e-15)
    np.testing.assert_allclose(t.h_weights, [1 / 3, 4 / 3, 1 / 3], rtol=1e-14)
    # oracle: exact integrals of 1, x^2, x^3 on [-1, 1]
    x = sp.Symbol("x")
    for k in (0, 2, 3):
        exact = float(sp.integrate(x ** k, (x, -1, 1)))
        assert abs(t.h_weights @ t.nodes ** k - exact) < 1e-15


def test_gll_eight_node_quadrature():
    t = sbp.build_gll(8)
    assert abs(t.h_weights @ t.nodes ** 13) < 1e-12
    assert abs(t.h_weights @ t.nodes ** 12 - 2 / 13) < 1e-12


@pytest.mark.parametrize("n", range(3, 13))
def test_gll_quadrature_and_differentiation(n):
    t = sbp.build_gll(n)
    x, w = t.nodes, t.h_weights
    x_s = sp.Symbol("x")
    for k in range(2 * n - 2):
        exact = float(sp.integrate(x_s ** k, (x_s, -1, 1)))
        assert abs(w @ x ** k - exact) < 1e-12
    D = t.dense()[0]
    for k in range(n):
        deriv = k * x ** (k - 1) if k else np.zeros(n)
        assert np.abs(D @ x ** k - deriv).max() < 1e-11
    Dp, Dm, H, Q = t.dense()
    assert np.abs(H @ Dp + Dm.T @ H - Q).max() < 1e-13 / np.diff(x).min()
    assert np.abs(D @ np.ones(n)).max() < 1e-12


def test_gll_six_node_row_orders():
    rep = sbp.verify_triplet(sbp.build_gll(6))
    assert np.all(rep["per_row_order"] == 5)


def test_gll_mapped_interval():
    t = sbp.build_gll(7, 2.0, 5.0)
    assert t.nodes[0] == 2.0 and t.nodes[-1] == 5.0
    assert abs(t.h_weights.sum() - 3.0) < 1e-13
    np.testing.assert_allclose(t.dense()[0] @ t.nodes ** 2, 2 * t.nodes, atol=1e-11)


def test_gll_rejects_two_nodes():
    with pytest.raises(ValueError):
        sbp.build_gll(2)


# ---------------------------------------------------------------- discrete delta


def test_discrete_delta_interior():
    t = sbp.build_shifted_uniform(4, 101, 0.01)
    d = sbp.discrete_delta(t, 50)
    assert d[49] == pytest.approx(100.0)
    assert np.count_nonzero(d) == 1


def test_discrete_delta_boundary():
    t = sbp.build_shifted_uniform(4, 12, 1.0)
    assert sbp.discrete_delta(t, 1)[0] == pytest.approx(144 / 49, rel=1e-15)


@pytest.mark.parametrize("kind", ["shifted", "symmetric", "gll"])
def test_discrete_delta_unit_mass(kind):
    t = sbp.build_triplet(kind, 11, p=4, a=0.0, b=1.0)
    for i in range(1, 12):
        assert t.h_weights @ sbp.discrete_delta(t, i) == pytest.approx(1.0, rel=1e-14)


def test_discrete_delta_range():
    t = sbp.build_shifted_uniform(4, 12, 1.0)
    with pytest.raises(IndexError):
        sbp.discrete_delta(t, 0)
    with pytest.raises(IndexError):
        sbp.discrete_delta(t, 13)


# ---------------------------------------------------------------- periodic operators


def test_periodic_pair_is_skew_adjoint():
    pair = sbp.build_periodic(4, 32, 1 / 32)
    Dp, Dm = pair.d_plus.toarray(), pair.d_minus.toarray()
    np.testing.assert_allclose(Dm, -Dp.T)
    x = np.arange(32) / 32
    err = np.abs(Dp @ np.sin(2 * np.pi * x) - 2 * np.pi * np.cos(2 * np.pi * x)).max()
    assert err < 2e-3
