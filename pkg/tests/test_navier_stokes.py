import numpy as np
import pytest
from oracles import damped_newton

from compsolve.pde.navier_stokes import (NSConfig, QuadratureUnderResolved, StreamFunctionBasis,
                                         build_ns_operator, default_modes, evolve_ns,
                                         rotational_forcing, solve_ns_steady, verify_ns_conditions)
from compsolve.solve import SolveConfig
from compsolve.spaces import phi_const, phi_rational

NU = 1.0


def config(modes=4, phi=None, delta=NU / 6, **kw):
    return NSConfig(NU, delta, phi or phi_rational(NU / 6), StreamFunctionBasis.first(modes), **kw)


def shear(model, amp):
    return model.load(lambda x, y: (amp * np.sin(np.pi * y), amp * x * (1 - x)))


def test_default_modes_order():
    assert default_modes(6) == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


def test_zero_phi_single_mode_zero_state():
    d = build_ns_operator(config(1, phi_const(0.0)))
    assert np.array_equal(d.f(np.zeros(1)), np.zeros(1))


def test_basis_divergence_free_and_no_slip():
    basis = StreamFunctionBasis.first(8)
    rng = np.random.default_rng(0)
    c = rng.standard_normal(8)
    pts = rng.random((200, 2))
    assert np.abs(basis.divergence(c, pts)).max() <= 1e-12
    t = rng.random(50)
    edges = np.concatenate([np.column_stack([t, 0 * t]), np.column_stack([t, 0 * t + 1]),
                            np.column_stack([0 * t, t]), np.column_stack([0 * t + 1, t])])
    u, _ = basis.evaluate(c, edges)
    assert np.abs(u).max() <= 1e-14


def test_convection_skew_symmetric():
    d = build_ns_operator(config(8, phi_const(0.0)))
    m = d.model
    rng = np.random.default_rng(1)
    for c in rng.standard_normal((100, 8)):
        scale = m.norm_V(c) ** 3
        assert abs(m.convection(c) @ c) <= 1e-10 * scale


def test_zero_phi_residual_is_stokes_plus_convection():
    d = build_ns_operator(config(4, phi_const(0.0)))
    c = np.random.default_rng(2).standard_normal(4)
    m = d.model
    np.testing.assert_allclose(d.f(c), NU * m.stiffness @ c + m.convection(c), rtol=1e-13)
    # the assembled trilinear tensor gives the same convection
    np.testing.assert_allclose(np.einsum("kij,i,j->k", m.convection_tensor, c, c), m.convection(c),
                               rtol=1e-12, atol=1e-14)


def test_stiffness_has_unit_diagonal():
    d = build_ns_operator(config(6))
    np.testing.assert_allclose(np.diag(d.model.stiffness), 1.0, rtol=1e-12)


def test_underresolved_quadrature_rejected():
    with pytest.raises(QuadratureUnderResolved):
        build_ns_operator(NSConfig(NU, NU / 6, phi_rational(NU / 6),
                                   StreamFunctionBasis(tuple(default_modes(4)), quad_order=4)))


def test_conditions_zero_phi():
    rep = verify_ns_conditions(config(4, phi_const(0.0)), samples=50)
    assert rep.all_passed
    # (c) holds with constant nu: slack (<f u, u> - 2nu/3 |u|^2) / |u|^2 = nu/3 + convection (= 0)
    assert rep.items["energy"].worst == pytest.approx(NU / 3, abs=1e-10)


def test_conditions_boundary_phi_fails_sup_bound():
    rep = verify_ns_conditions(config(4, phi_const(NU / 3), delta=0.01), samples=20)
    assert not rep.items["phi_sup"].passed


def test_conditions_rational_phi():
    rep = verify_ns_conditions(config(8), samples=1000)
    for key in ("phi_sup", "cond11", "energy"):
        assert rep.items[key].passed, key
    assert rep.items["phi_sup"].worst <= NU / 3 - NU / 6


def test_mu_out_of_range_rejected():
    with pytest.raises(ValueError):
        config(4, mu_cond11=NU / 3)


def test_steady_zero_forcing():
    d = build_ns_operator(config(4))
    t = solve_ns_steady(d, np.zeros(4))
    assert t.converged and np.array_equal(t.x, np.zeros(4))


def test_steady_tiny_forcing_is_linear_response():
    d = build_ns_operator(config(6))
    h0 = shear(d.model, 1.0)
    eps = 1e-3
    t = solve_ns_steady(d, eps * h0, SolveConfig(tol=1e-16 + 1e-14))
    stokes = np.linalg.solve(NU * d.model.stiffness, h0)
    dev = np.linalg.norm(t.x - eps * stokes) / np.linalg.norm(eps * stokes)
    assert t.converged and dev <= 1e-2


def test_steady_matches_newton_and_is_unique():
    d = build_ns_operator(config(4))
    h = shear(d.model, 40.0)
    cfg = SolveConfig(tol=1e-12, max_iter=300)
    a = solve_ns_steady(d, h, cfg)
    b = solve_ns_steady(d, h, cfg, x_start=np.full(4, 0.3))
    ref = damped_newton(lambda c: d.f(c) - h, np.zeros(4), tol=1e-12)
    assert a.converged and b.converged
    assert np.abs(a.x - ref).max() <= 1e-6
    assert np.abs(a.x - b.x).max() <= 1e-6


def test_evolution_zero_forcing_stays_zero():
    d = build_ns_operator(config(4))
    ev = evolve_ns(d, np.zeros(4), T=0.5, dt=0.1)
    assert all(np.array_equal(s, np.zeros(4)) for s in ev.states)


def test_evolution_random_forcing_energy():
    d = build_ns_operator(config(4))
    rng = np.random.default_rng(3)
    loads = {k: shear(d.model, 20.0) * rng.uniform(-1, 2) + rng.standard_normal(4) for k in range(1, 41)}
    ev = evolve_ns(d, lambda t: loads[int(round(t / 0.05))], T=2.0, dt=0.05,
                   cfg=SolveConfig(tol=1e-12))
    assert ev.status == "Completed" and len(ev.energy_slack) == 40
    assert ev.energy_ok


def test_evolution_rejects_bad_steps():
    d = build_ns_operator(config(4))
    with pytest.raises(ValueError):
        evolve_ns(d, np.zeros(4), T=1.0, dt=0.0)
    with pytest.raises(ValueError):
        evolve_ns(d, np.zeros(4), T=2.0, dt=1e-4)


def test_rotational_load_is_nonzero():
    d = build_ns_operator(config(4))
    assert np.linalg.norm(d.model.load(rotational_forcing(1.0))) > 0
