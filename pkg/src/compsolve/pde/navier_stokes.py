"""Modified Navier-Stokes on the unit square in a divergence-free stream-function Galerkin basis.

Velocity modes are u_k = (d_y psi_k, -d_x psi_k) with
psi_k = (x(1-x) y(1-y))^2 P_i(x) P_j(y), P shifted Legendre polynomials. Every
mode is divergence free by construction and vanishes (with its gradient's
tangential part) on the boundary, so no pressure unknown is needed. All linear
and trilinear forms are polynomial and integrated exactly by the Gauss rule.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial.legendre import Legendre, leggauss

from ..operators import Decomposition, LinearSurrogate, Mapping
from ..solve import SolveConfig, SolveTrace, solve_comparison
from ..spaces import Gram, ScalarFunction, SpaceDescriptor


class QuadratureUnderResolved(ValueError):
    pass


def default_modes(count: int) -> list[tuple[int, int]]:
    """The first ``count`` index pairs ordered by total degree, then by x index descending."""
    modes, total = [], 0
    while len(modes) < count:
        for i in range(total, -1, -1):
            modes.append((i, total - i))
        total += 1
    return modes[:count]


def _mode_polynomials(i: int):
    bubble = Polynomial([0.0, 1.0, -1.0]) ** 2
    leg = Legendre.basis(i).convert(kind=Polynomial)(Polynomial([-1.0, 2.0]))
    g = bubble * leg
    return g, g.deriv(1), g.deriv(2)


@dataclass(frozen=True)
class StreamFunctionBasis:
    modes: tuple[tuple[int, int], ...]
    quad_order: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(tuple(m) for m in self.modes))
        if not self.modes:
            raise ValueError("basis needs at least one mode")
        if self.quad_order is None:
            object.__setattr__(self, "quad_order", self.exact_order())

    @classmethod
    def first(cls, count: int, quad_order: int | None = None) -> "StreamFunctionBasis":
        return cls(tuple(default_modes(count)), quad_order)

    @property
    def size(self) -> int:
        return len(self.modes)

    def degree(self) -> int:
        return 4 + max(max(m) for m in self.modes)

    def exact_order(self) -> int:
        """Gauss points per axis integrating the trilinear convection form exactly."""
        return (3 * self.degree() + 2) // 2 + 1

    @cached_property
    def _scales(self) -> np.ndarray:
        # unit stiffness diagonal keeps the Galerkin matrices well scaled
        K = _stiffness(*_tabulate(self.modes, np.ones(self.size), self.quad_order))
        return 1.0 / np.sqrt(np.diag(K))

    def tabulate(self, order: int | None = None):
        """(weights, points, U, G): U[k, a, q] = u_k^a, G[k, a, b, q] = d_b u_k^a at node q."""
        return _tabulate(self.modes, self._scales, order or self.quad_order)

    def evaluate(self, coeffs, pts: np.ndarray):
        """Velocity and its gradient at arbitrary points pts (shape (m, 2))."""
        U, G = _fields(self.modes, self._scales, pts[:, 0], pts[:, 1])
        c = np.asarray(coeffs, dtype=float)
        return np.einsum("k,kaq->aq", c, U), np.einsum("k,kabq->abq", c, G)

    def divergence(self, coeffs, pts: np.ndarray) -> np.ndarray:
        _, G = self.evaluate(coeffs, pts)
        return G[0, 0] + G[1, 1]


def _fields(modes, scales, x, y):
    U = np.empty((len(modes), 2, x.size))
    G = np.empty((len(modes), 2, 2, x.size))
    for k, (i, j) in enumerate(modes):
        gx, dgx, ddgx = (p(x) for p in _mode_polynomials(i))
        gy, dgy, ddgy = (p(y) for p in _mode_polynomials(j))
        s = scales[k]
        U[k, 0] = s * gx * dgy
        U[k, 1] = -s * dgx * gy
        G[k, 0, 0] = s * dgx * dgy
        G[k, 0, 1] = s * gx * ddgy
        G[k, 1, 0] = -s * ddgx * gy
        G[k, 1, 1] = -s * dgx * dgy
    return U, G


def _tabulate(modes, scales, order):
    t, w = leggauss(order)
    t, w = 0.5 * (t + 1.0), 0.5 * w
    X, Y = np.meshgrid(t, t, indexing="xy")
    W = np.outer(w, w).ravel()
    U, G = _fields(modes, scales, X.ravel(), Y.ravel())
    return W, np.column_stack([X.ravel(), Y.ravel()]), U, G


def _stiffness(W, pts, U, G):
    return np.einsum("kabq,labq,q->kl", G, G, W)


def _mass(W, pts, U, G):
    return np.einsum("kaq,laq,q->kl", U, U, W)


def _convection_tensor(W, pts, U, G):
    # N[k, i, j] = int ((u_i . grad) u_j) . u_k
    return np.einsum("ibq,jabq,kaq,q->kij", U, G, U, W)


@dataclass(frozen=True, eq=False)
class NSConfig:
    nu: float
    delta: float
    phi: ScalarFunction
    basis: StreamFunctionBasis
    forcing: np.ndarray | None = None
    mu_cond11: float = 0.0
    radius: float = 10.0

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError("viscosity must be positive")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not 0.0 <= self.mu_cond11 <= self.nu / 3.0 - self.delta + 1e-15:
            raise ValueError("phi-difference constant mu must satisfy 0 <= mu <= nu/3 - delta")


class GalerkinNS:
    """Assembled forms and the nonlinear residual of the modified steady problem."""

    def __init__(self, cfg: NSConfig):
        self.cfg = cfg
        self.nu = cfg.nu
        self.phi = cfg.phi
        self.basis = cfg.basis
        self.W, self.pts, self.U, self.G = cfg.basis.tabulate()
        self.B = 0.5 * (self.G + self.G.transpose(0, 2, 1, 3))
        self.stiffness = _stiffness(self.W, self.pts, self.U, self.G)
        self.mass = _mass(self.W, self.pts, self.U, self.G)
        self.convection_tensor = _convection_tensor(self.W, self.pts, self.U, self.G)
        self.V = SpaceDescriptor(cfg.basis.size, Gram(self.stiffness), "V")
        self.V_star = SpaceDescriptor(cfg.basis.size, Gram(np.linalg.inv(self.stiffness)), "V*")

    # -- pointwise fields --------------------------------------------------
    def velocity(self, c):
        return np.einsum("k,kaq->aq", c, self.U)

    def gradient(self, c):
        return np.einsum("k,kabq->abq", c, self.G)

    def strain_rate(self, c):
        g = self.gradient(c)
        return 0.5 * (g + g.transpose(1, 0, 2))

    def strain_magnitude(self, c):
        """s(u) = (sum_ij b_ij(u)^2)^(1/2) at the quadrature nodes."""
        b = self.strain_rate(c)
        return np.sqrt(np.einsum("abq,abq->q", b, b))

    # -- forms -------------------------------------------------------------
    def stokes(self, c):
        return self.nu * (self.stiffness @ c)

    def viscosity_term(self, c):
        """<2 phi(s(u)) B u, B u_k> for every mode k."""
        b = self.strain_rate(c)
        s = np.sqrt(np.einsum("abq,abq->q", b, b))
        return np.einsum("abq,kabq,q->k", 2.0 * self.phi(s) * b, self.B, self.W)

    def convection(self, c):
        """<(u . grad) u, u_k> for every mode k."""
        u, g = self.velocity(c), self.gradient(c)
        conv = np.einsum("bq,abq->aq", u, g)
        return np.einsum("aq,kaq,q->k", conv, self.U, self.W)

    def residual(self, c):
        c = np.asarray(c, dtype=float)
        return self.stokes(c) + self.viscosity_term(c) + self.convection(c)

    def norm_V(self, c) -> float:
        return self.V.norm(c)

    def norm_L2(self, c) -> float:
        c = np.asarray(c, dtype=float)
        return float(np.sqrt(max(c @ self.mass @ c, 0.0)))

    def norm_L4(self, c) -> float:
        u = self.velocity(np.asarray(c, dtype=float))
        return float(np.sum(self.W * np.einsum("aq,aq->q", u, u) ** 2) ** 0.25)

    def load(self, body_force: Callable[[np.ndarray, np.ndarray], tuple]) -> np.ndarray:
        """Galerkin load vector int h . u_k for a body force h(x, y) -> (hx, hy)."""
        hx, hy = body_force(self.pts[:, 0], self.pts[:, 1])
        h = np.vstack([np.broadcast_to(hx, self.W.shape), np.broadcast_to(hy, self.W.shape)])
        return np.einsum("aq,kaq,q->k", h, self.U, self.W)


def _check_quadrature(basis: StreamFunctionBasis, rel_tol: float = 1e-8) -> None:
    coarse = basis.tabulate(basis.quad_order)
    fine = basis.tabulate(basis.quad_order + 2)
    for name, form in (("stiffness", _stiffness), ("mass", _mass), ("convection", _convection_tensor)):
        a, b = form(*coarse), form(*fine)
        # integrating |integrand| gives the scale; entries that cancel to ~0 (skew forms) stay meaningful
        W, pts, U, G = fine
        scale = np.abs(form(W, pts, np.abs(U), np.abs(G))).max()
        err = np.abs(a - b).max()
        if err > rel_tol * scale:
            raise QuadratureUnderResolved(
                f"{name} form changes by {err / scale:.3e} (relative) when the Gauss rule grows "
                f"from {basis.quad_order} to {basis.quad_order + 2} points per axis")


def build_ns_operator(cfg: NSConfig) -> Decomposition:
    """f(c) = Stokes + modified viscosity + convection on Galerkin coefficients; f0 = Stokes."""
    _check_quadrature(cfg.basis)
    model = GalerkinNS(cfg)
    f = Mapping(model.V, model.V_star, model.residual, np.zeros(cfg.basis.size), cfg.radius,
                label="ns-steady")
    f0 = LinearSurrogate(cfg.nu * model.stiffness)
    return Decomposition(f, f0, model=model)


@dataclass
class CheckItem:
    passed: bool
    worst: float
    witness: object = None
    note: str = ""


@dataclass
class NSConditionReport:
    items: dict[str, CheckItem] = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(i.passed for i in self.items.values())

    def to_dict(self) -> dict:
        return {k: {"passed": v.passed, "worst": v.worst, "note": v.note} for k, v in self.items.items()}


def _random_coefficients(model: GalerkinNS, rng, radius: float) -> np.ndarray:
    c = rng.standard_normal(model.basis.size)
    return c * (radius * rng.random() / model.norm_V(c))


def verify_ns_conditions(cfg: NSConfig, samples: int = 100, seed: int = 0,
                         model: GalerkinNS | None = None, t_max: float | None = None,
                         grid_points: int = 201, monotone_route: bool = False) -> NSConditionReport:
    """Sampled checks of the sup bound on phi, the phi-difference condition, the energy
    bound and the lower stability bound.

    Items: ``phi_sup`` (a), ``cond11`` (b), ``energy`` (c), ``stability`` (d).
    With ``monotone_route`` the alternative monotone-phi conditions replace (b);
    they carry no quantitative delta, so the configured delta is used as given.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    model = model or GalerkinNS(cfg)
    rng = np.random.default_rng([seed, 21])
    nu, delta = cfg.nu, cfg.delta
    bound = nu / 3.0 - delta
    report = NSConditionReport()

    cs = [_random_coefficients(model, rng, cfg.radius) for _ in range(samples)]

    # (a) sup |phi(s(u))| at quadrature nodes
    worst_a, wit_a = -np.inf, None
    s_max = 0.0
    for c in cs:
        s = model.strain_magnitude(c)
        s_max = max(s_max, float(s.max()))
        v = float(np.max(np.abs(model.phi(s))))
        if v > worst_a:
            worst_a, wit_a = v, c
    report.items["phi_sup"] = CheckItem(worst_a <= bound, worst_a, wit_a, f"bound nu/3 - delta = {bound:.6g}")

    # (b) |phi(t) - phi(tau)| |t| <= |mu + phi(t)| |t - tau| on a (t, tau) grid
    if monotone_route:
        ts = np.linspace(0.0, t_max or max(2.0 * s_max, 1.0), grid_points)
        ok = model.phi.check_monotone(ts)
        report.items["cond11"] = CheckItem(ok, 0.0, None, "monotone-phi route; delta taken as declared")
    else:
        ts = np.linspace(0.0, t_max or max(2.0 * s_max, 1.0), grid_points)
        T, TAU = np.meshgrid(ts, ts, indexing="ij")
        lhs = np.abs(model.phi(T) - model.phi(TAU)) * np.abs(T)
        rhs = np.abs(cfg.mu_cond11 + model.phi(T)) * np.abs(T - TAU)
        excess = lhs - rhs - 1e-14 * (1.0 + lhs)
        j = np.unravel_index(np.argmax(excess), excess.shape)
        report.items["cond11"] = CheckItem(bool(excess[j] <= 0.0), float(excess[j]),
                                           (float(T[j]), float(TAU[j])), f"mu = {cfg.mu_cond11}")

    # (c) <f(u), u> >= (2 nu / 3) |u|_V^2
    worst_c, wit_c = np.inf, None
    for c in cs:
        nv2 = model.norm_V(c) ** 2
        if nv2 == 0.0:
            continue
        slack = (model.residual(c) @ c - 2.0 * nu / 3.0 * nv2) / nv2
        if slack < worst_c:
            worst_c, wit_c = slack, c
    report.items["energy"] = CheckItem(worst_c >= -1e-12, float(worst_c), wit_c,
                                       "min of (<f(u),u> - 2nu/3 |u|^2) / |u|^2")

    # (d) |f(u) - f(v)|_V* >= 3 delta |w|_V - 1/2 (|u|_4 + |v|_4) |w|_4
    worst_d, wit_d = np.inf, None
    for k in range(samples):
        u = cs[k]
        v = cs[(k + 1) % samples] if samples > 1 else 0.5 * u
        w = u - v
        nw = model.norm_V(w)
        if nw == 0.0:
            continue
        lhs = model.V_star.norm(model.residual(u) - model.residual(v))
        rhs = 3.0 * delta * nw - 0.5 * (model.norm_L4(u) + model.norm_L4(v)) * model.norm_L4(w)
        slack = (lhs - rhs) / nw
        if slack < worst_d:
            worst_d, wit_d = slack, (u, v)
    report.items["stability"] = CheckItem(worst_d >= -1e-12, float(worst_d), wit_d,
                                          "min of (lhs - rhs) / |w|_V")
    return report


def solve_ns_steady(d: Decomposition, h_rhs, cfg: SolveConfig = SolveConfig(), x_start=None) -> SolveTrace:
    x0 = d.f.center if x_start is None else x_start
    return solve_comparison(d, h_rhs, x0, cfg)


@dataclass
class Evolution:
    times: list[float]
    states: list[np.ndarray]
    traces: list[SolveTrace]
    energy_slack: list[float]
    status: str = "Completed"

    @property
    def energy_ok(self) -> bool:
        return all(s >= 0.0 for s in self.energy_slack)


def evolve_ns(d: Decomposition, forcing: Callable[[float], np.ndarray] | np.ndarray, T: float,
              dt: float, cfg: SolveConfig = SolveConfig()) -> Evolution:
    """Implicit Euler from u(0) = 0; each step is a comparison solve with surrogate M/dt + nu K.

    The discrete energy inequality
        1/2 |u+|^2 + dt (2 nu/3) |u+|_V^2 <= 1/2 |u|^2 + dt <h, u+>
    is evaluated at every accepted step; ``energy_slack`` holds rhs - lhs
    (minus a round-off allowance proportional to the solve tolerance).
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    steps = int(round(T / dt))
    if steps > 10_000:
        raise ValueError("T/dt must not exceed 1e4")
    model: GalerkinNS = d.model
    f = d.f
    nu, M, K = model.nu, model.mass, model.stiffness
    load = forcing if callable(forcing) else (lambda t, h=np.asarray(forcing, dtype=float): h)
    surrogate = LinearSurrogate(M / dt + nu * K)
    step_map = Mapping(f.domain, f.codomain, lambda c: M @ c / dt + model.residual(c),
                       f.center, f.radius, label="implicit-euler-step")
    step = Decomposition(step_map, surrogate, model=model)

    c = np.zeros(model.basis.size)
    ev = Evolution([0.0], [c.copy()], [], [])
    for n in range(1, steps + 1):
        t = n * dt
        h = np.asarray(load(t), dtype=float)
        trace = solve_comparison(step, h + M @ c / dt, c, cfg)
        ev.traces.append(trace)
        if not trace.converged:
            ev.status = f"StepRejected at step {n}: {trace.outcome.value}"
            return ev
        c_new = trace.x
        lhs = 0.5 * c_new @ M @ c_new + dt * (2.0 * nu / 3.0) * (c_new @ K @ c_new)
        rhs = 0.5 * c @ M @ c + dt * (h @ c_new)
        allowance = dt * trace.residual * (1.0 + model.norm_V(c_new)) + 1e-14 * (1.0 + abs(rhs))
        ev.energy_slack.append(float(rhs - lhs + allowance))
        c = c_new
        ev.times.append(t)
        ev.states.append(c.copy())
    return ev


def rotational_forcing(amplitude: float) -> Callable:
    """Body force amplitude * (y - 1/2, 1/2 - x): a solid-body swirl."""
    return lambda x, y: (amplitude * (y - 0.5), amplitude * (0.5 - x))


__all__ = [
    "QuadratureUnderResolved", "StreamFunctionBasis", "NSConfig", "GalerkinNS", "build_ns_operator",
    "verify_ns_conditions", "NSConditionReport", "solve_ns_steady", "evolve_ns", "Evolution",
    "default_modes", "rotational_forcing",
]
