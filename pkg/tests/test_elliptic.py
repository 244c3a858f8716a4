import numpy as np
import pytest
import scipy.sparse as sp
from oracles import damped_newton

from compsolve.certify import Contraction, SamplerConfig, certify, estimate_contraction
from compsolve.grid import Grid
from compsolve.pde.elliptic import (CoefficientEnvelopeViolated, EllipticCoefficients,
                                    build_elliptic_operator, check_blend_condition, const,
                                    gradient_bump_coefficient, laplace_coefficient,
                                    manufactured_rhs, modulated_coefficient,
                                    solution_dependent_coefficient, solve_elliptic)
from compsolve.solve import SolveConfig
from compsolve.spaces import phi_lorentzian, phi_one


def laplace(dim, n):
    return build_elliptic_operator(Grid(dim, n), EllipticCoefficients(phi_one(), const(1), const(1)),
                                   laplace_coefficient())


def test_three_point_laplacian():
    d = laplace(1, 3)
    h = 0.25
    T = (np.diag([2.0] * 3) + np.diag([-1.0] * 2, 1) + np.diag([-1.0] * 2, -1)) / h**2
    I = np.eye(3)
    A = np.column_stack([d.f(I[:, j]) for j in range(3)])
    np.testing.assert_allclose(A, T, rtol=1e-14)


def test_consistency_order_1d():
    errs = []
    for n in (17, 33, 65, 129):
        g = Grid(1, n)
        d = laplace(1, n)
        u = np.sin(np.pi * g.nodes[:, 0])
        errs.append(np.abs(d.f.fn(u) - np.pi**2 * u).max())
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(orders - 2.0) <= 0.3)


def test_five_point_laplacian_2d():
    g = Grid(2, 4)
    d = laplace(2, 4)
    L1 = (np.diag([2.0] * 4) + np.diag([-1.0] * 3, 1) + np.diag([-1.0] * 3, -1)) / g.h**2
    L = np.kron(np.eye(4), L1) + np.kron(L1, np.eye(4))
    A = np.column_stack([d.f(e) for e in np.eye(16)])
    np.testing.assert_allclose(A, L, rtol=1e-13)


def test_summation_by_parts():
    g = Grid(2, 6)
    phi = phi_lorentzian(1.0, 1.0)
    a = modulated_coefficient(phi)
    d = build_elliptic_operator(g, EllipticCoefficients(phi, const(1.75), const(1.25)), a)
    rng = np.random.default_rng(0)
    u, v = rng.standard_normal((2, g.size))
    lhs = d.domain.pair(d.f.fn(u), v)
    rhs = 0.0
    for i, (D, A) in enumerate(zip(g.differences, g.averages)):
        rhs += np.sum(a(i, g.edge_midpoints[i], A @ u, D @ u) * (D @ u) * (D @ v)) * g.cell_weight
    assert lhs == pytest.approx(rhs, rel=1e-13)


def test_envelope_operators_are_monotone():
    g = Grid(1, 20)
    phi = phi_lorentzian(1.0, 1.0)
    d = build_elliptic_operator(g, EllipticCoefficients(phi, const(2.0), const(1.0)),
                                modulated_coefficient(phi, 1.5, 0.25))
    rng = np.random.default_rng(1)
    for _ in range(200):
        u, v = rng.standard_normal((2, g.size)) * 3
        for op in (d.f0.upper, d.f0.lower):
            assert (op(u) - op(v)) @ (u - v) >= 0


def test_bump_coefficient_contracts():
    phi = phi_one()
    d = build_elliptic_operator(Grid(1, 15), EllipticCoefficients(phi, const(2.0), const(1.0)),
                                gradient_bump_coefficient(), radius=0.5)
    c = estimate_contraction(d, SamplerConfig(n_pairs=256))
    assert isinstance(c, Contraction) and c.sigma < 1


def test_zero_rhs_gives_zero():
    d = laplace(1, 9)
    t = solve_elliptic(d, np.zeros(9))
    assert t.converged and np.array_equal(t.x, np.zeros(9))


@pytest.mark.parametrize("dim,n", [(1, 33), (2, 9)])
def test_manufactured_recovery(dim, n):
    g = Grid(dim, n)
    phi = phi_lorentzian(1.0, 1.0)
    d = build_elliptic_operator(g, EllipticCoefficients(phi, const(1.75), const(1.25)),
                                modulated_coefficient(phi))
    u_star = np.prod(np.sin(np.pi * g.nodes), axis=1)
    t = solve_elliptic(d, manufactured_rhs(d, u_star), SolveConfig(tol=1e-12, max_iter=400))
    assert t.converged
    assert np.abs(t.x - u_star).max() <= 1e-8


def test_lorentzian_against_newton():
    g = Grid(1, 65)
    phi = phi_lorentzian(1.0, 1.0)
    d = build_elliptic_operator(g, EllipticCoefficients(phi, const(1.75), const(1.25)),
                                modulated_coefficient(phi))
    h = np.pi**2 * np.sin(np.pi * g.nodes[:, 0])
    t = solve_elliptic(d, h, SolveConfig(tol=1e-12, max_iter=400))
    assert t.converged
    assert np.abs(d.f.fn(t.x) - h).max() <= 1e-8
    u_newton = damped_newton(lambda u: d.f.fn(u) - h, np.zeros(g.size), tol=1e-9)
    assert np.abs(t.x - u_newton).max() <= 1e-6


def test_solution_dependent_coefficient_solves():
    g = Grid(1, 31)
    phi = phi_one()
    d = build_elliptic_operator(g, EllipticCoefficients(phi, const(1.75), const(1.25)),
                                solution_dependent_coefficient(phi))
    h = 5 * np.sin(np.pi * g.nodes[:, 0])
    t = solve_elliptic(d, h, SolveConfig(tol=1e-11, max_iter=400))
    assert t.converged and t.telescoping_error <= 1e-10


def test_envelope_violation_reported():
    with pytest.raises(CoefficientEnvelopeViolated) as exc:
        build_elliptic_operator(Grid(1, 9), EllipticCoefficients(phi_one(), const(2.0), const(1.0)),
                                lambda i, x, xi, eta: np.full_like(eta, 0.5))
    assert exc.value.witness["a"] == 0.5 and exc.value.witness["lower"] == 1.0


def test_envelope_bounds_validated():
    with pytest.raises(ValueError):
        EllipticCoefficients(phi_one(), const(1.0), const(2.0)).bounds(Grid(1, 5))
    with pytest.raises(ValueError):
        EllipticCoefficients(phi_one(), const(1.0), const(1.0), lam=0.7, rho=0.7)


def test_blend_condition_zero_for_separable_coefficient():
    # a = (lam b + rho c) phi exactly, so the implicit k equals the blend
    phi = phi_lorentzian(1.0, 1.0)
    co = EllipticCoefficients(phi, const(2.0), const(1.0))
    a = lambda i, x, xi, eta: 1.5 * phi(eta)
    assert check_blend_condition(Grid(1, 9), co, a) <= 1e-12


def test_certificate_passes_for_lorentzian():
    g = Grid(1, 33)
    phi = phi_lorentzian(1.0, 1.0)
    d = build_elliptic_operator(g, EllipticCoefficients(phi, const(1.75), const(1.25)),
                                modulated_coefficient(phi))
    rep = certify(d, SamplerConfig(n_sphere=32, n_radii=4, n_pairs=128))
    assert rep.verdict == "PASS"


def test_analytic_jacobian_matches_fd():
    g = Grid(2, 5)
    phi = phi_lorentzian(1.0, 1.0)
    d = build_elliptic_operator(g, EllipticCoefficients(phi, const(1.75), const(1.25)),
                                modulated_coefficient(phi))
    u = np.random.default_rng(2).standard_normal(g.size)
    J = d.f0.jacobian(u)
    J = J.toarray() if sp.issparse(J) else J
    from oracles import fd_jacobian

    np.testing.assert_allclose(J, fd_jacobian(d.f0, u), rtol=1e-6, atol=1e-4)
