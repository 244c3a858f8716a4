import json

import numpy as np
import pytest

from compsolve.certify import (Contraction, Inconclusive, Member, NonMember, NotContractive,
                               SamplerConfig, certify, estimate_comparison_k, estimate_contraction,
                               estimate_coercivity_nu, estimate_growth_mu, estimate_local_stability_k1,
                               solvable_set_membership)
from compsolve.grid import Grid
from compsolve.operators import Decomposition, IdentitySurrogate, LinearSurrogate, Mapping
from compsolve.pde.elliptic import EllipticCoefficients, build_elliptic_operator, const
from compsolve.spaces import Lp, SpaceDescriptor, phi_lorentzian

CFG = SamplerConfig(n_sphere=64, n_radii=6, n_pairs=256, rng_seed=7)


def decomp(fn, dim=2, r=1.0, f0=None):
    X = SpaceDescriptor(dim, Lp(2.0))
    return Decomposition(Mapping(X, X, fn, np.zeros(dim), r), f0 or IdentitySurrogate())


def test_mu_identity_and_zero():
    mu = estimate_growth_mu(decomp(lambda x: np.array(x)), CFG)
    np.testing.assert_allclose(mu[:, 1], mu[:, 0], atol=1e-12)
    mu0 = estimate_growth_mu(decomp(lambda x: np.zeros(2)), CFG)
    assert np.all(mu0[:, 1] == 0.0)


def test_mu_sin_bound():
    mu = estimate_growth_mu(decomp(lambda x: x + 0.25 * np.sin(x), dim=1), CFG)
    # |t + 0.25 sin t| <= 1.25 |t|; dense scan gives the exact 1D value at t = 1
    t = np.linspace(-1, 1, 100_001)
    assert mu[-1, 1] <= 1.25
    assert mu[-1, 1] <= np.max(np.abs(t + 0.25 * np.sin(t))) + 1e-15
    assert np.all(np.diff(mu[:, 1]) >= 0)


def test_nu_identity_and_negation():
    table, delta0 = estimate_coercivity_nu(decomp(lambda x: np.array(x), r=1.5), CFG)
    np.testing.assert_allclose(table[:, 1], table[:, 0], atol=1e-12)
    assert delta0 == pytest.approx(1.5)
    assert table[-1, 1] == delta0
    neg = decomp(lambda x: -x, r=1.5, f0=LinearSurrogate(-np.eye(2)))
    _, delta_neg = estimate_coercivity_nu(neg, CFG)
    assert delta_neg == pytest.approx(-1.5)
    assert certify(neg, CFG).verdict == "FAIL"


def test_nu_elliptic_blend_dominates_identity():
    g = Grid(1, 15)
    phi = phi_lorentzian(1.0, 1.0)  # values in (1, 2]
    co = EllipticCoefficients(phi, const(1.0), const(1.0))
    d = build_elliptic_operator(g, co, lambda i, x, xi, eta: phi(eta), radius=2.0)
    table, _ = estimate_coercivity_nu(d, SamplerConfig(n_sphere=1000, n_radii=4, n_pairs=8))
    assert np.all(table[:, 1] >= table[:, 0] * (1 - 1e-12))


def test_comparison_constant():
    assert estimate_comparison_k(decomp(lambda x: np.array(x)), CFG) == pytest.approx(1.0)
    assert estimate_comparison_k(decomp(lambda x: 2 * x), CFG) == pytest.approx(2.0)


def test_contraction_examples():
    c = estimate_contraction(decomp(lambda x: np.array(x)), CFG)
    assert isinstance(c, Contraction) and (c.sigma, c.m0) == (0.0, 1)
    big = SamplerConfig(n_pairs=10_000, rng_seed=1)
    c = estimate_contraction(decomp(lambda x: x + 0.25 * np.sin(x), dim=1, r=2.0), big)
    assert isinstance(c, Contraction) and c.m0 == 1
    # Lipschitz bound of 0.25 sin: sigma <= 0.25, attained near x = 0
    assert 0.24 <= c.sigma <= 0.25
    nc = estimate_contraction(decomp(lambda x: -x), CFG)
    assert isinstance(nc, NotContractive)
    assert np.all(nc.ratios >= 1.0)


def test_monotone_envelope_never_needs_m0_above_one():
    # k is nondecreasing, so k(tau) >= tau at a node implies k^m(tau) >= tau for every m
    rng = np.random.default_rng(11)
    for _ in range(20):
        a, w = rng.uniform(0.1, 1.5), rng.uniform(0.5, 5.0)
        c = estimate_contraction(decomp(lambda x: x + a * np.sin(w * x) / w, dim=1, r=2.0),
                                 SamplerConfig(n_pairs=300, rng_seed=int(rng.integers(1000))))
        if isinstance(c, Contraction):
            assert c.m0 == 1
        else:
            assert np.all(c.ratios >= 1.0)


def test_local_stability():
    k1, skipped = estimate_local_stability_k1(decomp(lambda x: np.array(x)), CFG)
    assert k1 == pytest.approx(1.0) and skipped == 0
    k1, _ = estimate_local_stability_k1(decomp(lambda x: 3 * x), CFG)
    assert k1 == pytest.approx(3.0)
    cube = decomp(lambda x: x**3, dim=1, r=1.0)
    k1, _ = estimate_local_stability_k1(cube, SamplerConfig(n_pairs=2000))
    assert k1 < 0.05
    assert certify(cube, CFG).verdict == "FAIL"


def test_membership_examples():
    ident = decomp(lambda x: np.array(x))
    cfg = SamplerConfig(n_sphere=2000)
    m = solvable_set_membership(ident, [0.5, 0.0], cfg)
    assert isinstance(m, Member) and m.margin == pytest.approx(0.5, abs=1e-4)
    nm = solvable_set_membership(ident, [1.5, 0.0], cfg)
    assert isinstance(nm, NonMember)
    np.testing.assert_allclose(nm.witness, [1.0, 0.0], atol=0.05)
    sin2 = decomp(lambda x: x + 0.25 * np.sin(x))
    assert isinstance(solvable_set_membership(sin2, [0.7, 0.0], SamplerConfig(n_sphere=10_000)), Member)


def test_membership_dense_scan_agrees():
    # oracle: dense scan of the unit circle for <f(x) - y, x> >= 0
    th = np.linspace(0, 2 * np.pi, 10_000, endpoint=False)
    xs = np.column_stack([np.cos(th), np.sin(th)])
    y = np.array([0.7, 0.0])
    slack = np.einsum("ij,ij->i", xs + 0.25 * np.sin(xs) - y, xs)
    assert slack.min() > 0
    m = solvable_set_membership(decomp(lambda x: x + 0.25 * np.sin(x)), y, SamplerConfig(n_sphere=4000))
    assert isinstance(m, Member) and m.margin >= slack.min() - 1e-12


def test_membership_boundary_inconclusive():
    m = solvable_set_membership(decomp(lambda x: np.array(x), dim=1), [1.0], SamplerConfig(n_sphere=8))
    assert isinstance(m, Inconclusive)


def test_report_fields_and_determinism():
    d = decomp(lambda x: x + 0.25 * np.sin(x), r=2.0)
    a, b = certify(d, CFG), certify(d, CFG)
    assert a.to_json() == b.to_json()
    body = json.loads(a.to_json())
    assert set(body) == {"mu", "nu", "k", "k1", "sigma", "m0", "delta0", "r1", "verdict", "gaps", "seed"}
    assert body["verdict"] == "PASS" and body["seed"] == 7
    assert a.r1_radius < (1 - a.sigma) * d.f.radius
    assert a.gaps


def test_scaling_covariance():
    c = 3.0
    d = decomp(lambda x: x + 0.25 * np.sin(x))
    dc = Decomposition(d.f.scaled(c), LinearSurrogate(c * np.eye(2)))
    r, rc = certify(d, CFG), certify(dc, CFG)
    np.testing.assert_allclose(rc.mu_table[:, 1], c * r.mu_table[:, 1], rtol=1e-12)
    np.testing.assert_allclose(rc.nu_table[:, 1], c * r.nu_table[:, 1], rtol=1e-12)
    assert rc.delta0 == pytest.approx(c * r.delta0, rel=1e-12)
    assert rc.k_comparison == pytest.approx(r.k_comparison, rel=1e-12)
    y = np.array([0.3, -0.2])
    assert type(solvable_set_membership(d, y, CFG)) is type(solvable_set_membership(dc, c * y, CFG))


def test_ns_comparison_constant_at_least_two_thirds():
    from compsolve.pde.navier_stokes import NSConfig, StreamFunctionBasis, build_ns_operator
    from compsolve.spaces import phi_rational

    cfg = NSConfig(1.0, 1 / 6, phi_rational(1 / 6), StreamFunctionBasis.first(4), radius=5.0)
    k = estimate_comparison_k(build_ns_operator(cfg), SamplerConfig(n_sphere=200, n_radii=4))
    assert k >= 2 / 3
