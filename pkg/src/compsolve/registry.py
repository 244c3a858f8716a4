"""Build mappings, surrogates and PDE problems from JSON-style dictionaries.

Every builder raises ConfigError on a malformed or unknown entry so the CLI
can map it to its configuration exit code.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .certify import SamplerConfig
from .grid import Grid
from .operators import (Decomposition, DiagonalMonotoneSurrogate, IdentitySurrogate, InnerSolve,
                        LinearSurrogate, Mapping, Surrogate, frozen_jacobian_surrogate)
from .solve import SolveConfig
from .spaces import Lp, SpaceDescriptor, make_phi


class ConfigError(ValueError):
    pass


def _get(spec: dict, key: str, default: Any = ..., kind: Callable = float):
    if key not in spec:
        if default is ...:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return kind(spec[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key!r}: {spec[key]!r} ({exc})") from exc


def _vector(value, dim: int, name: str) -> np.ndarray:
    v = np.atleast_1d(np.asarray(value, dtype=float))
    if v.size == 1 and dim > 1:
        v = np.full(dim, float(v[0]))
    if v.shape != (dim,):
        raise ConfigError(f"{name} must have length {dim}, got {v.size}")
    return v


def solver_config(spec: dict | None) -> SolveConfig:
    spec = dict(spec or {})
    known = {"tol", "max_iter", "radius_guard", "sigma_hint", "m0_hint", "divergence_windows"}
    extra = set(spec) - known - {"patched", "reanchor_radius", "patch_iter"}
    if extra:
        raise ConfigError(f"unknown solver keys {sorted(extra)}")
    try:
        return SolveConfig(**{k: v for k, v in spec.items() if k in known})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"solver: {exc}") from exc


def sampler_config(spec: dict | None, seed: int) -> SamplerConfig:
    spec = dict(spec or {})
    spec.pop("rng_seed", None)
    try:
        return SamplerConfig(rng_seed=int(seed), **spec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"sampler: {exc}") from exc


# -- finite-dimensional operators -------------------------------------------------

OPERATOR_NAMES = ("identity", "linear", "negation", "sin-perturbed", "diag-monotone", "cube")


def _surrogate(kind: str, f: Mapping, linear_part=None) -> Surrogate:
    if kind == "identity":
        return IdentitySurrogate()
    if kind == "exact":
        if linear_part is None:
            raise ConfigError("surrogate 'exact' is only available for linear operators")
        return LinearSurrogate(linear_part)
    if kind == "frozen-jacobian":
        return frozen_jacobian_surrogate(f, f.center)
    raise ConfigError(f"unknown surrogate {kind!r} (identity | exact | frozen-jacobian)")


@dataclass
class OperatorProblem:
    decomposition: Decomposition
    surrogate_kind: str
    factory: Callable[[np.ndarray], Surrogate] | None = None


def build_operator(spec: dict, radius: float | None = None) -> OperatorProblem:
    """Operator from {"name", "dim", "radius", "center", "surrogate", ...}.

    ``radius`` overrides the ball radius (used by the sweep).
    """
    name = spec.get("name")
    if name not in OPERATOR_NAMES:
        raise ConfigError(f"unknown operator {name!r}; expected one of {', '.join(OPERATOR_NAMES)}")
    dim = _get(spec, "dim", 1, int)
    if dim < 1:
        raise ConfigError("dim must be >= 1")
    r = float(radius) if radius is not None else _get(spec, "radius", 1.0)
    if not r > 0:
        raise ConfigError("radius must be positive")
    center = _vector(spec.get("center", 0.0), dim, "center")
    p = _get(spec, "p", 2.0)
    try:
        X = SpaceDescriptor(dim, Lp(p), f"l{p}")
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    linear_part = None
    default_surrogate = "identity"
    if name == "identity":
        fn = lambda x: np.array(x, dtype=float)
        linear_part = np.eye(dim)
    elif name in ("linear", "negation"):
        if "matrix" in spec:
            A = np.asarray(spec["matrix"], dtype=float)
            if A.shape != (dim, dim):
                raise ConfigError(f"matrix must be {dim}x{dim}")
        else:
            A = _get(spec, "scale", -1.0 if name == "negation" else 1.0) * np.eye(dim)
        fn = lambda x, A=A: A @ x
        linear_part = A
    elif name == "sin-perturbed":
        a = _get(spec, "amplitude", 0.25)
        fn = lambda x, a=a: x + a * np.sin(x)
    elif name == "diag-monotone":
        phi = make_phi(spec.get("phi", {"kind": "lorentzian", "c0": 1.0, "c1": 1.0}))
        a = _get(spec, "amplitude", 0.1)
        fn = lambda x, a=a: phi(x) * x + a * np.sin(x)
        default_surrogate = "diag-monotone"
    else:  # cube
        fn = lambda x: x**3
        default_surrogate = "frozen-jacobian"

    f = Mapping(X, X, fn, center, r, label=name)
    kind = spec.get("surrogate", default_surrogate)
    if kind == "diag-monotone":
        if name != "diag-monotone":
            raise ConfigError("surrogate 'diag-monotone' needs operator 'diag-monotone'")
        f0 = DiagonalMonotoneSurrogate(phi, InnerSolve(tol=1e-14))
    else:
        f0 = _surrogate(kind, f, linear_part)
    factory = None
    if kind == "frozen-jacobian":
        factory = lambda anchor, f=f: frozen_jacobian_surrogate(f, anchor)
    return OperatorProblem(Decomposition(f, f0, notes=(name, kind)), kind, factory)


FIXED_POINT_KINDS = ("cos", "const", "linear")


def build_fixed_point(spec: dict) -> Mapping:
    """The perturbation f1 for x - f1(x) = y, from {"kind": cos | const | linear, ...}."""
    kind = spec.get("kind")
    dim = _get(spec, "dim", 1, int)
    X = SpaceDescriptor(dim, Lp(2.0))
    center = _vector(spec.get("center", 0.0), dim, "center")
    r = _get(spec, "radius", 10.0)
    if kind == "cos":
        a = _get(spec, "amplitude", 0.5)
        fn = lambda x, a=a: a * np.cos(x)
    elif kind == "const":
        c = _vector(spec.get("value", 1.0), dim, "value")
        fn = lambda x, c=c: c.copy()
    elif kind == "linear":
        s = _get(spec, "scale", 2.0)
        fn = lambda x, s=s: s * x
    else:
        raise ConfigError(f"unknown fixed-point map {kind!r}; expected one of {FIXED_POINT_KINDS}")
    try:
        return Mapping(X, X, fn, center, r, label=f"f1:{kind}")
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# -- elliptic --------------------------------------------------------------------

def build_elliptic(spec: dict, seed: int = 0):
    """(Decomposition, grid, right-hand side, exact solution or None) for an elliptic config."""
    from .pde.elliptic import (EllipticCoefficients, build_elliptic_operator, const,
                               gradient_bump_coefficient, laplace_coefficient, modulated_coefficient,
                               solution_dependent_coefficient)

    g = spec.get("grid", {})
    dim, n = _get(g, "dim", 1, int), _get(g, "n", 33, int)
    if dim not in (1, 2) or n < 3:
        raise ConfigError("grid needs dim in {1, 2} and n >= 3")
    grid = Grid(dim, n)
    phi = _phi(spec.get("phi"))
    env = spec.get("envelope", {})
    coeff = dict(spec.get("coefficient", {"kind": "laplace"}))
    ck = coeff.get("kind", "laplace")
    if ck == "laplace":
        a = laplace_coefficient(_get(coeff, "value", 1.0))
    elif ck == "constant":
        a = lambda axis, x, xi, eta, v=_get(coeff, "value", 1.0): v * phi(eta)
    elif ck == "gradient-bump":
        a = gradient_bump_coefficient()
    elif ck == "modulated":
        a = modulated_coefficient(phi, _get(coeff, "base", 1.5), _get(coeff, "amp", 0.25))
    elif ck == "solution-dependent":
        a = solution_dependent_coefficient(phi, _get(coeff, "base", 1.5), _get(coeff, "amp", 0.25))
    else:
        raise ConfigError(f"unknown coefficient kind {ck!r}")
    try:
        coeffs = EllipticCoefficients(phi, const(_get(env, "upper", 1.0)), const(_get(env, "lower", 1.0)),
                                      _get(env, "lam", 0.5), _get(env, "rho", 0.5))
        d = build_elliptic_operator(grid, coeffs, a, p=_get(spec, "p", 2.0),
                                    radius=_get(spec, "radius", 10.0), seed=seed)
    except ValueError as exc:
        if type(exc) is not ValueError:
            raise
        raise ConfigError(f"elliptic: {exc}") from exc

    rhs = dict(spec.get("rhs", {"kind": "sine"}))
    rk = rhs.get("kind", "sine")
    mode = np.prod(np.sin(np.pi * grid.nodes), axis=1)
    exact = None
    if rk == "sine":
        h = _get(rhs, "scale", dim * np.pi**2) * mode
    elif rk == "manufactured":
        exact = _get(rhs, "amplitude", 1.0) * mode
        h = d.f.fn(exact)
    elif rk == "zero":
        h = np.zeros(grid.size)
    else:
        raise ConfigError(f"unknown rhs kind {rk!r} (sine | manufactured | zero)")
    return d, grid, h, exact


def _phi(spec):
    try:
        return make_phi(spec)
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"phi: {exc}") from exc


# -- Navier-Stokes ---------------------------------------------------------------

def build_ns(spec: dict):
    """(NSConfig, Decomposition, load vector) for an ns-steady / ns-evolve config."""
    from .pde.navier_stokes import (NSConfig, StreamFunctionBasis, build_ns_operator,
                                    rotational_forcing)

    nu = _get(spec, "nu", 1.0)
    delta = _get(spec, "delta", nu / 6.0)
    b = spec.get("basis", {})
    try:
        if "modes" in b and isinstance(b["modes"], list):
            basis = StreamFunctionBasis(tuple(tuple(int(i) for i in m) for m in b["modes"]),
                                        b.get("quad_order"))
        else:
            basis = StreamFunctionBasis.first(_get(b, "modes", 4, int), b.get("quad_order"))
        cfg = NSConfig(nu, delta, _phi(spec.get("phi", {"kind": "rational", "c0": nu / 6.0})),
                       basis, mu_cond11=_get(spec, "mu", 0.0), radius=_get(spec, "radius", 10.0))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"ns: {exc}") from exc
    d = build_ns_operator(cfg)
    fs = dict(spec.get("forcing", {"kind": "rotational", "amplitude": 10.0}))
    fk = fs.get("kind", "rotational")
    if fk == "rotational":
        h = d.model.load(rotational_forcing(_get(fs, "amplitude", 10.0)))
    elif fk == "shear":
        amp = _get(fs, "amplitude", 10.0)
        h = d.model.load(lambda x, y: (amp * np.sin(np.pi * y), amp * x * (1 - x)))
    elif fk == "coefficients":
        h = _vector(fs.get("values", 0.0), basis.size, "forcing.values")
    elif fk == "zero":
        h = np.zeros(basis.size)
    else:
        raise ConfigError(f"unknown forcing kind {fk!r} (rotational | shear | coefficients | zero)")
    return cfg, d, h
