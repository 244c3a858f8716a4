"""Finite-dimensional normed spaces, their duals and the normalized duality map.

A vector is a plain float array; the :class:`SpaceDescriptor` carries the norm
and the pairing with the dual. Dual vectors reuse the same entry layout and
are measured with the conjugate norm.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy import linalg, optimize

from .grid import Grid


class NonFiniteEntry(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class UnsupportedNorm(TypeError):
    pass


def _check_exponent(p: float) -> float:
    p = float(p)
    if not (1.0 < p < np.inf):
        raise ValueError(f"exponent must satisfy 1 < p < inf (strictly convex norm), got {p}")
    return p


def conjugate(p: float) -> float:
    return p / (p - 1.0)


def _lp(v: np.ndarray, p: float, weight: float = 1.0) -> float:
    a = np.abs(v)
    top = a.max(initial=0.0)
    if top == 0.0:
        return 0.0
    return float(top * (weight * ((a / top) ** p).sum()) ** (1.0 / p))


def _lp_duality(v: np.ndarray, p: float, weight: float = 1.0) -> np.ndarray:
    # J(v)_i = |v|^(2-p) |v_i|^(p-2) v_i, written to stay finite at v_i = 0
    nv = _lp(v, p, weight)
    if nv == 0.0:
        return np.zeros_like(v, dtype=float)
    r = v / nv
    return nv * np.abs(r) ** (p - 1.0) * np.sign(r)


@dataclass(frozen=True)
class Lp:
    p: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "p", _check_exponent(self.p))


@dataclass(frozen=True)
class DiscreteSobolevW1p:
    """Zero-trace W^{1,p} on a grid: the weighted l^p norm of the forward-difference gradient."""

    p: float
    grid: Grid

    def __post_init__(self):
        object.__setattr__(self, "p", _check_exponent(self.p))


@dataclass(frozen=True)
class DiscreteSobolevDual:
    """W^{-1,q}: the dual of :class:`DiscreteSobolevW1p` with the grid-weighted pairing."""

    p: float
    grid: Grid

    def __post_init__(self):
        object.__setattr__(self, "p", _check_exponent(self.p))


@dataclass(frozen=True, eq=False)
class Gram:
    """Hilbert norm sqrt(c^T G c) on Galerkin coefficients; the dual uses G^{-1}."""

    matrix: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", g)
        object.__setattr__(self, "_chol", linalg.cho_factor(g))

    @property
    def p(self) -> float:
        return 2.0


NormKind = Union[Lp, DiscreteSobolevW1p, DiscreteSobolevDual, Gram]


@dataclass(frozen=True, eq=False)
class SpaceDescriptor:
    dim: int
    norm_kind: NormKind = field(default_factory=Lp)
    label: str = ""

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dim}")
        nk = self.norm_kind
        if isinstance(nk, (DiscreteSobolevW1p, DiscreteSobolevDual)) and nk.grid.size != self.dim:
            raise DimensionMismatch(f"grid has {nk.grid.size} nodes but space has dim {self.dim}")
        if isinstance(nk, Gram) and nk.matrix.shape != (self.dim, self.dim):
            raise DimensionMismatch(f"Gram matrix shape {nk.matrix.shape} does not fit dim {self.dim}")

    # -- helpers -----------------------------------------------------------
    def _vec(self, v) -> np.ndarray:
        if not (type(v) is np.ndarray and v.dtype == np.float64 and v.ndim == 1):
            v = np.asarray(v, dtype=float).reshape(-1)
        if v.shape[0] != self.dim:
            raise DimensionMismatch(f"expected {self.dim} entries, got {v.shape[0]}")
        if not np.isfinite(v).all():
            raise NonFiniteEntry(f"non-finite entry in vector of {self.label or 'space'}")
        return v

    @property
    def weight(self) -> float:
        """Quadrature weight of the pairing (1 except on grid spaces)."""
        nk = self.norm_kind
        if isinstance(nk, (DiscreteSobolevW1p, DiscreteSobolevDual)):
            return nk.grid.cell_weight
        return 1.0

    def zeros(self) -> np.ndarray:
        return np.zeros(self.dim)

    # -- norms -------------------------------------------------------------
    def norm(self, v) -> float:
        v = self._vec(v)
        nk = self.norm_kind
        if isinstance(nk, Lp):
            return _lp(v, nk.p)
        if isinstance(nk, DiscreteSobolevW1p):
            return _lp(nk.grid.gradient @ v, nk.p, nk.grid.cell_weight)
        if isinstance(nk, DiscreteSobolevDual):
            return _sobolev_dual_norm(v, nk)
        if isinstance(nk, Gram):
            return float(np.sqrt(max(v @ nk.matrix @ v, 0.0)))
        raise UnsupportedNorm(type(nk).__name__)

    def dual_norm(self, v) -> float:
        """Norm of a dual vector, i.e. sup <v, x> over the unit ball of this space."""
        v = self._vec(v)
        nk = self.norm_kind
        if isinstance(nk, Lp):
            return _lp(v, conjugate(nk.p))
        if isinstance(nk, DiscreteSobolevW1p):
            return _sobolev_dual_norm(v, DiscreteSobolevDual(nk.p, nk.grid))
        if isinstance(nk, Gram):
            return float(np.sqrt(max(v @ linalg.cho_solve(nk._chol, v), 0.0)))
        raise UnsupportedNorm(f"dual norm of {type(nk).__name__}")

    def pair(self, y_star, x) -> float:
        """Duality pairing <y*, x>: Euclidean sum, weighted by the cell volume on grids."""
        return float(self.weight * (self._vec(y_star) @ self._vec(x)))

    def duality_map(self, x) -> np.ndarray:
        """Normalized duality map: <J(x), x> = |x|^2 and |J(x)|_* = |x|."""
        x = self._vec(x)
        nk = self.norm_kind
        if isinstance(nk, Lp):
            return _lp_duality(x, nk.p)
        if isinstance(nk, DiscreteSobolevW1p):
            g = nk.grid
            # transport the edge-wise l^p map back through the difference operator
            return g.gradient.T @ _lp_duality(g.gradient @ x, nk.p, g.cell_weight)
        if isinstance(nk, Gram):
            return nk.matrix @ x
        raise UnsupportedNorm(f"duality map on {type(nk).__name__}")

    def dual_space(self) -> "SpaceDescriptor":
        nk = self.norm_kind
        if isinstance(nk, Lp):
            return SpaceDescriptor(self.dim, Lp(conjugate(nk.p)), f"{self.label}*")
        if isinstance(nk, DiscreteSobolevW1p):
            return SpaceDescriptor(self.dim, DiscreteSobolevDual(nk.p, nk.grid), f"{self.label}*")
        if isinstance(nk, Gram):
            return SpaceDescriptor(self.dim, Gram(np.linalg.inv(nk.matrix)), f"{self.label}*")
        raise UnsupportedNorm(f"dual of {type(nk).__name__}")


def _sobolev_dual_norm(f: np.ndarray, nk: DiscreteSobolevDual) -> float:
    """min |g|_{q,h} over edge fields g with D^T g = f (Hahn-Banach in finite dimension)."""
    g = nk.grid
    if not np.any(f):
        return 0.0
    w = g.cell_weight
    if nk.p == 2.0:
        return float(np.sqrt(max(w * (f @ g.laplacian_solve(f)), 0.0)))
    q = conjugate(nk.p)
    D = g.gradient
    g0 = D @ g.laplacian_solve(f)
    null = g._cache.get("gradT_null")
    if null is None:
        null = g._cache.setdefault("gradT_null", linalg.null_space(D.T.toarray()))
    scale = np.abs(g0).max()

    def objective(t):
        r = (g0 + null @ t) / scale
        a = np.abs(r)
        val = w * np.sum(a**q)
        grad = w * q * null.T @ (a ** (q - 1.0) * np.sign(r))
        return val, grad / scale

    res = optimize.minimize(objective, np.zeros(null.shape[1]), jac=True, method="L-BFGS-B",
                            options={"ftol": 1e-15, "gtol": 1e-13, "maxiter": 2000})
    return float(scale * res.fun ** (1.0 / q))


@dataclass(frozen=True)
class ScalarFunction:
    """A real function of one variable, optionally declared nondecreasing.

    ``deriv`` is used by Newton-type inner solves; when absent a central
    difference is used.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    monotone: bool = False
    deriv: Callable[[np.ndarray], np.ndarray] | None = None
    label: str = ""

    def __call__(self, t):
        return self.fn(np.asarray(t, dtype=float))

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        if self.deriv is not None:
            return self.deriv(t)
        step = np.cbrt(np.finfo(float).eps) * (1.0 + np.abs(t))
        return (self.fn(t + step) - self.fn(t - step)) / (2.0 * step)

    def check_monotone(self, ts) -> bool:
        """True when the declared monotonicity holds on the sorted samples ``ts``."""
        if not self.monotone:
            return True
        vals = self(np.sort(np.asarray(ts, dtype=float)))
        return bool(np.all(np.diff(vals) >= 0.0))


def phi_one() -> ScalarFunction:
    return ScalarFunction(np.ones_like, monotone=True, deriv=np.zeros_like, label="one")


def phi_const(c0: float) -> ScalarFunction:
    return ScalarFunction(lambda t: np.full_like(t, c0), monotone=True, deriv=np.zeros_like,
                          label=f"const({c0})")


def phi_rational(c0: float, c1: float = 1.0, rho: float = 1.0, sigma: float = 1.0) -> ScalarFunction:
    """c0 |t|^rho / (|t|^sigma + c1), defined on t >= 0 and extended evenly."""
    if rho < 1 or sigma < rho or c0 < 0 or c1 < 0:
        raise ValueError("rational phi needs sigma >= rho >= 1 and c0, c1 >= 0")

    def fn(t):
        a = np.abs(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = c0 * a**rho / (a**sigma + c1)
        return np.where(a == 0.0, 0.0, out)

    return ScalarFunction(fn, monotone=False, label=f"rational({c0},{c1},{rho},{sigma})")


def phi_lorentzian(c0: float = 1.0, c1: float = 1.0) -> ScalarFunction:
    """1 + c0 / (1 + c1 t^2); t * phi(t) is increasing when c0 <= 8."""

    def fn(t):
        return 1.0 + c0 / (1.0 + c1 * t * t)

    def deriv(t):
        return -2.0 * c0 * c1 * t / (1.0 + c1 * t * t) ** 2

    return ScalarFunction(fn, monotone=False, deriv=deriv, label=f"lorentzian({c0},{c1})")


def make_phi(spec: dict | None) -> ScalarFunction:
    """Build a phi from its JSON description (kind: one | const | rational | lorentzian)."""
    spec = dict(spec or {"kind": "one"})
    kind = spec.pop("kind", "one")
    if kind == "one":
        return phi_one()
    if kind == "const":
        return phi_const(float(spec["c0"]))
    if kind == "rational":
        return phi_rational(float(spec.get("c0", 1.0)), float(spec.get("c1", 1.0)),
                            float(spec.get("rho", 1.0)), float(spec.get("sigma", 1.0)))
    if kind == "lorentzian":
        return phi_lorentzian(float(spec.get("c0", 1.0)), float(spec.get("c1", 1.0)))
    raise ValueError(f"unknown phi kind {kind!r}")
