"""Mappings on a ball and their decomposition f = f0 + f1 around an invertible surrogate f0."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy import linalg
from scipy.sparse.linalg import splu

from .spaces import ScalarFunction, SpaceDescriptor

EPS = np.finfo(float).eps


class OutOfDomain(ValueError):
    pass


class SingularJacobian(np.linalg.LinAlgError):
    pass


class SurrogateSolveFailed(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Mapping:
    """f: B_r(x0) in X -> Y. ``jac`` (optional) returns the derivative at a point."""

    domain: SpaceDescriptor
    codomain: SpaceDescriptor
    fn: Callable[[np.ndarray], np.ndarray]
    center: np.ndarray
    radius: float
    jac: Callable[[np.ndarray], object] | None = None
    label: str = ""

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(-1)
        if c.shape[0] != self.domain.dim:
            raise ValueError("ball center does not live in the domain")
        if not self.radius > 0:
            raise ValueError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", c)

    def distance(self, x) -> float:
        return self.domain.norm(np.asarray(x, dtype=float) - self.center)

    def contains(self, x, slack: float = 1e-12) -> bool:
        return self.distance(x) <= self.radius * (1.0 + slack)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self.contains(x):
            raise OutOfDomain(f"|x - x0| = {self.distance(x):.6g} exceeds ball radius {self.radius:.6g}")
        return np.asarray(self.fn(x), dtype=float)

    def with_ball(self, center=None, radius=None) -> "Mapping":
        return Mapping(self.domain, self.codomain, self.fn,
                       self.center if center is None else center,
                       self.radius if radius is None else radius, self.jac, self.label)

    def scaled(self, c: float) -> "Mapping":
        jac = None if self.jac is None else (lambda x, j=self.jac: c * j(x))
        return Mapping(self.domain, self.codomain, lambda x, f=self.fn: c * f(x),
                       self.center, self.radius, jac, f"{c}*{self.label}")


@dataclass(frozen=True)
class InnerSolve:
    tol: float = 1e-12
    max_iter: int = 100
    # accepted when Newton stalls at round-off
    stall_tol: float = 1e-8


class Surrogate:
    """Base class: an evaluable mapping f0 that can also solve f0(x) = z."""

    inner: InnerSolve = InnerSolve()

    def __call__(self, x) -> np.ndarray:
        raise NotImplementedError

    def solve(self, z, guess=None) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, x):
        raise NotImplementedError


def _factorize(A):
    if sp.issparse(A):
        A = A.tocsc()
        if A.shape[0] <= 2000:
            c = np.linalg.cond(A.toarray())
            if not np.isfinite(c) or c > 1.0 / EPS:
                raise SingularJacobian(f"condition estimate {c:.3g} exceeds 1/eps")
        try:
            lu = splu(A)
        except RuntimeError as exc:
            raise SingularJacobian(str(exc)) from exc
        return lu.solve
    A = np.asarray(A, dtype=float)
    c = np.linalg.cond(A)
    if not np.isfinite(c) or c > 1.0 / EPS:
        raise SingularJacobian(f"condition estimate {c:.3g} exceeds 1/eps")
    lu = linalg.lu_factor(A, check_finite=False)
    return lambda b: linalg.lu_solve(lu, b, check_finite=False)


class LinearSurrogate(Surrogate):
    """f0(x) = A x + b, factorized once."""

    def __init__(self, matrix, offset=None, inner: InnerSolve | None = None):
        self.matrix = matrix if sp.issparse(matrix) else np.atleast_2d(np.asarray(matrix, dtype=float))
        n = self.matrix.shape[0]
        self.offset = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)
        self._solve = _factorize(self.matrix)
        if inner is not None:
            self.inner = inner

    def __call__(self, x):
        return self.matrix @ np.asarray(x, dtype=float) + self.offset

    def solve(self, z, guess=None):
        return self._solve(np.asarray(z, dtype=float) - self.offset)

    def jacobian(self, x):
        return self.matrix


class IdentitySurrogate(Surrogate):
    def __call__(self, x):
        return np.array(x, dtype=float)

    def solve(self, z, guess=None):
        return np.array(z, dtype=float)

    def jacobian(self, x):
        return np.eye(np.size(x))


class FrozenJacobianSurrogate(LinearSurrogate):
    """f0(x) = f(x0) + A (x - x0) with A the derivative of f at x0."""

    def __init__(self, base, value, matrix, inner: InnerSolve | None = None):
        self.base = np.asarray(base, dtype=float)
        self.value = np.asarray(value, dtype=float)
        super().__init__(matrix, self.value - matrix @ self.base, inner)


def fd_jacobian(fn, x0, h=None) -> np.ndarray:
    """Central-difference Jacobian of fn at x0."""
    x0 = np.asarray(x0, dtype=float)
    if h is None:
        h = default_fd_step(x0)
    f_ref = np.asarray(fn(x0), dtype=float)
    J = np.empty((f_ref.size, x0.size))
    for j in range(x0.size):
        e = np.zeros_like(x0)
        e[j] = h
        J[:, j] = (np.asarray(fn(x0 + e)) - np.asarray(fn(x0 - e))) / (2.0 * h)
    return J


def default_fd_step(x0) -> float:
    return float(np.cbrt(EPS) * (1.0 + np.linalg.norm(x0)))


def frozen_jacobian_surrogate(f: Mapping, x0, h: float | None = None,
                              inner: InnerSolve | None = None) -> FrozenJacobianSurrogate:
    """Affine surrogate from the central-difference Jacobian of f at x0.

    The raw ``f.fn`` is evaluated at x0 +- h e_j, so f must be defined on that
    neighborhood (it may stick out of the declared ball by h).
    """
    x0 = np.asarray(x0, dtype=float)
    if h is None:
        h = default_fd_step(x0)
    if not h > 0:
        raise ValueError("finite-difference step must be positive")
    A = fd_jacobian(f.fn, x0, h)
    return FrozenJacobianSurrogate(x0, f.fn(x0), A, inner)


def _newton(fn, jac, z, x, inner: InnerSolve, label: str) -> np.ndarray:
    """Damped Newton for fn(x) = z with backtracking on the residual norm."""
    z = np.asarray(z, dtype=float)
    x = np.array(x, dtype=float)
    scale = 1.0 + np.linalg.norm(z)
    r = fn(x) - z
    rn = np.linalg.norm(r)
    for _ in range(inner.max_iter):
        if rn <= inner.tol * scale:
            return x
        J = jac(x)
        try:
            dx = (splu(sp.csc_matrix(J)).solve(r) if sp.issparse(J)
                  else linalg.solve(J, r, check_finite=False))
        except (RuntimeError, linalg.LinAlgError) as exc:
            raise SurrogateSolveFailed(f"{label}: singular Newton system ({exc})") from exc
        t = 1.0
        while True:
            x_try = x - t * dx
            r_try = fn(x_try) - z
            rn_try = np.linalg.norm(r_try)
            if rn_try < (1.0 - 1e-4 * t) * rn or t < 1e-6:
                break
            t *= 0.5
        if rn_try >= rn:
            # no decrease: we are at the round-off floor or the system is not solvable
            if rn <= inner.stall_tol * scale:
                return x
            raise SurrogateSolveFailed(f"{label}: Newton stalled at residual {rn:.3e}")
        x, r, rn = x_try, r_try, rn_try
    if rn <= inner.stall_tol * scale:
        return x
    raise SurrogateSolveFailed(f"{label}: {inner.max_iter} iterations, residual {rn:.3e}")


class MonotoneBlendSurrogate(Surrogate):
    """f0 = lam * upper + rho * lower for two monotone operators, lam + rho = 1."""

    def __init__(self, upper: Callable, lower: Callable, lam: float, rho: float,
                 upper_jac: Callable | None = None, lower_jac: Callable | None = None,
                 inner: InnerSolve | None = None):
        if lam < 0 or rho < 0 or abs(lam + rho - 1.0) > 1e-12:
            raise ValueError(f"blend weights need lam, rho >= 0 and lam + rho = 1, got {lam}, {rho}")
        self.upper, self.lower = upper, lower
        self.lam, self.rho = float(lam), float(rho)
        self.upper_jac, self.lower_jac = upper_jac, lower_jac
        if inner is not None:
            self.inner = inner

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.lam * self.upper(x) + self.rho * self.lower(x)

    def jacobian(self, x):
        if self.upper_jac is not None and self.lower_jac is not None:
            return self.lam * self.upper_jac(x) + self.rho * self.lower_jac(x)
        return fd_jacobian(self, x)

    def solve(self, z, guess=None):
        x = np.zeros(np.size(z)) if guess is None else guess
        return _newton(self, self.jacobian, z, x, self.inner, "monotone blend")


class DiagonalMonotoneSurrogate(Surrogate):
    """f0(x)_i = phi(x_i) x_i with t -> phi(t) t strictly increasing."""

    def __init__(self, phi: ScalarFunction, inner: InnerSolve | None = None):
        self.phi = phi
        if inner is not None:
            self.inner = inner

    def _psi(self, t):
        return self.phi(t) * t

    def _dpsi(self, t):
        return self.phi(t) + self.phi.derivative(t) * t

    def __call__(self, x):
        return self._psi(np.asarray(x, dtype=float))

    def jacobian(self, x):
        return np.diag(self._dpsi(np.asarray(x, dtype=float)))

    def solve(self, z, guess=None):
        z = np.asarray(z, dtype=float)
        g = np.zeros_like(z) if guess is None else np.asarray(guess, dtype=float)
        return np.array([self._solve_scalar(zi, gi) for zi, gi in zip(z, g)])

    def _solve_scalar(self, z: float, t: float) -> float:
        """Safeguarded Newton on psi(t) = z inside an expanding bracket."""
        tol = self.inner.tol * (1.0 + abs(z))
        lo, hi = t - 1.0, t + 1.0
        for _ in range(200):
            if self._psi(lo) <= z:
                break
            lo = t - 2.0 * (t - lo)
        for _ in range(200):
            if self._psi(hi) >= z:
                break
            hi = t + 2.0 * (hi - t)
        if not (self._psi(lo) <= z <= self._psi(hi)):
            raise SurrogateSolveFailed(f"could not bracket psi(t) = {z}")
        t = min(max(t, lo), hi)
        for _ in range(self.inner.max_iter + 200):
            r = self._psi(t) - z
            if abs(r) <= tol:
                return float(t)
            if r > 0:
                hi = t
            else:
                lo = t
            d = self._dpsi(t)
            t_new = t - r / d if d > 0 else np.nan
            if not (lo < t_new < hi):
                t_new = 0.5 * (lo + hi)
            if hi - lo <= 4 * EPS * (1.0 + abs(t)):
                return float(t_new)
            t = t_new
        raise SurrogateSolveFailed(f"scalar solve for psi(t) = {z} did not converge")


@dataclass(frozen=True, eq=False)
class Decomposition:
    """f with its surrogate f0; the perturbation f1 = f - f0 is always derived."""

    f: Mapping
    f0: Surrogate
    notes: tuple[str, ...] = field(default=())
    # discretization behind f (grid problem, Galerkin model), when there is one
    model: object = None

    def f1(self, x) -> np.ndarray:
        return self.f(x) - self.f0(x)

    @property
    def domain(self) -> SpaceDescriptor:
        return self.f.domain

    @property
    def codomain(self) -> SpaceDescriptor:
        return self.f.codomain


def eval_f1(d: Decomposition, x) -> np.ndarray:
    return d.f1(x)


def solve_surrogate(s: Surrogate, z, guess=None) -> np.ndarray:
    return s.solve(z, guess)
