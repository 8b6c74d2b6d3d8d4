"""Verification helpers: materialization, manufactured solutions, Rayleigh speed and trace metrics."""
import numpy as np
import pytest
import sympy as sp

from elastowave import verify as vf
from elastowave.elastic import isotropic_stiffness

t, x1, x2 = vf.T_SYM, vf.X_SYMS[0], vf.X_SYMS[1]


# ---------------------------------------------------------------- dense checks


def test_materialize_identity_and_cap():
    np.testing.assert_array_equal(vf.materialize(lambda v: v, 5), np.eye(5))
    with pytest.raises(ValueError):
        vf.materialize(lambda v: v, vf.MAX_MATERIALIZE + 1)


def test_check_symmetric_nsd():
    rng = np.random.default_rng(0)
    M = rng.standard_normal((6, 6))
    E = -(M @ M.T)
    ok, sym, ratio = vf.check_symmetric_nsd(E)
    assert ok and sym == 0.0 and ratio <= 0
    assert not vf.check_symmetric_nsd(E + 0.1 * np.triu(np.ones((6, 6)), 1))[0]
    assert not vf.check_symmetric_nsd(-E)[0]


def test_null_vectors_projected_out():
    L = -(2 * np.eye(5) - np.eye(5, k=1) - np.eye(5, k=-1))
    L[0, 0] = L[-1, -1] = -1.0
    ok, _, ratio = vf.check_symmetric_nsd(L, [np.ones(5)])
    assert ok and ratio < 0


# ---------------------------------------------------------------- Rayleigh speed


def test_rayleigh_speed_half_plane():
    assert vf.rayleigh_speed(3200.0, 1847.5) == pytest.approx(1698.6, abs=0.1)


def test_rayleigh_speed_poisson_solid():
    # vp = sqrt(3) vs: the classical root c^2/vs^2 = 2 - 2/sqrt(3)
    c = vf.rayleigh_speed(np.sqrt(3.0), 1.0)
    assert c == pytest.approx(np.sqrt(2 - 2 / np.sqrt(3)), rel=1e-9)
    assert c == pytest.approx(0.9194, abs=1e-4)


def test_rayleigh_speed_validation():
    with pytest.raises(ValueError):
        vf.rayleigh_speed(1.0, 2.0)


# ---------------------------------------------------------------- manufactured solutions


def test_manufactured_zero_target():
    man = vf.manufactured_forcing(("wave1d", 1.0, 2.0), (sp.Integer(0),))
    np.testing.assert_array_equal(man.forcing(0.3, np.linspace(0, 1, 5)[:, None]), 0.0)


def test_manufactured_static_linear_field():
    C = isotropic_stiffness(2.0, 1.0, 1.0, dim=2)
    man = vf.manufactured_forcing(("elastic", 1.0, C), (3 * x1 - x2, 2 * x2 + 1))
    pts = np.random.default_rng(1).uniform(0, 1, (10, 2))
    np.testing.assert_array_equal(man.forcing(0.0, pts), 0.0)


def test_manufactured_wave1d_hand_computed():
    # u = sin(t) x^2, rho = 2, modulus = 3: f = -2 sin(t) x^2 - 6 sin(t)
    man = vf.manufactured_forcing(("wave1d", 2.0, 3.0), (sp.sin(t) * x1 ** 2,))
    x = np.array([[0.5]])
    assert man.forcing(0.7, x)[0, 0] == pytest.approx(-2 * np.sin(0.7) * 0.25 - 6 * np.sin(0.7), rel=1e-14)


def test_manufactured_elastic_matches_finite_differences():
    C = np.array([[4.0, 1.2, 0.3], [1.2, 3.0, -0.2], [0.3, -0.2, 1.1]])
    target = (sp.sin(t) * sp.cos(x1 + 2 * x2), sp.exp(-t) * sp.sin(x1 * x2))
    man = vf.manufactured_forcing(("elastic", 1.7, C), target)
    pts = np.random.default_rng(2).uniform(-1, 1, (20, 2))
    assert vf.fd_operator_check(("elastic", 1.7, C), man, pts) < 1e-6


def test_manufactured_variable_coefficient_1d():
    mod = 1 + x1 ** 2
    man = vf.manufactured_forcing(("wave1d", 1.0, mod), (sp.cos(t) * sp.sin(x1),))
    pts = np.linspace(-1, 1, 9)[:, None]
    assert vf.fd_operator_check(("wave1d", 1.0, mod), man, pts, h=2e-4) < 1e-6


# ---------------------------------------------------------------- trace metrics


def pulse(times, center, width=0.02):
    return np.exp(-((times - center) / width) ** 2)


def test_cnorm_error():
    times = np.linspace(0, 1, 501)
    ref = np.stack([pulse(times, 0.4), 0.5 * pulse(times, 0.4)], axis=1)
    assert vf.cnorm_error(ref, ref) == 0.0
    assert vf.cnorm_error(1.1 * ref, ref) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        vf.cnorm_error(ref[:, :1], ref)


def test_error_vs_distance_coincident_runs():
    times = np.linspace(0, 1, 101)
    runs = [np.stack([pulse(times, c)] * 2, axis=1) for c in (0.2, 0.5)]
    d, errs = vf.error_vs_distance(runs, runs, [10.0, 20.0])
    np.testing.assert_array_equal(errs, 0.0)
    with pytest.raises(ValueError):
        vf.error_vs_distance(runs, runs[:1], [10.0, 20.0])


def test_self_convergence_recovers_order():
    times = np.linspace(0, 1, 401)
    exact = np.stack([pulse(times, 0.5, 0.1), np.sin(3 * times)], axis=1)
    bump = np.stack([np.cos(5 * times), times ** 2], axis=1)
    traces = [exact + 1e-3 * 0.5 ** (4 * k) * bump for k in range(4)]
    rep = vf.self_convergence([0, 1, 2, 3], {"r": traces})
    np.testing.assert_allclose(rep.orders["r"], 4.0, atol=1e-3)
    assert any(line.startswith("ORDER") for line in rep.lines())


def test_arrival_time_with_delay():
    times = np.arange(0, 1, 1e-3)
    tr = np.stack([pulse(times, 0.46), np.zeros_like(times)], axis=1)
    assert vf.arrival_time(times, tr, expected=0.3, delay=0.16) == pytest.approx(0.30, abs=1e-4)
    assert vf.arrival_time(times, tr, 0.3, 0.16, method="peak") == pytest.approx(0.30, abs=1e-4)


def test_envelope_of_quadrature_pair():
    times = np.linspace(0, 1, 2001)
    g = pulse(times, 0.5, 0.08)
    tr = np.stack([g * np.cos(200 * times), g * np.sin(200 * times)], axis=1)
    env = vf.envelope(tr)
    mid = slice(600, 1400)
    # the analytic envelope of each component is g; two components add in quadrature
    np.testing.assert_allclose(env[mid], np.sqrt(2) * g[mid], rtol=2e-2, atol=1e-3)


# ---------------------------------------------------------------- small experiments


def test_convergence_1d_periodic_reaches_design_order():
    rep = vf.convergence_1d(p=4, levels=3, n0=20, bc="periodic")
    assert all(abs(o - 4) < 0.3 for o in rep.orders["u"])


def test_sem_convergence_small():
    errs = vf.experiment_sem_convergence((4, 6))
    assert errs[6] < errs[4] / 10
