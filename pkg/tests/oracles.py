"""Reference solvers that share no code with the package under test."""
from __future__ import annotations

import numpy as np
from scipy.optimize import brentq


def bisection(g, lo: float, hi: float, tol: float = 1e-14) -> float:
    """Root of a scalar function with a sign change on [lo, hi]."""
    return brentq(g, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500)


def banach(g, x0: float, tol: float = 1e-15, max_iter: int = 10_000) -> float:
    """Plain fixed-point iteration x <- g(x)."""
    x = x0
    for _ in range(max_iter):
        x_new = g(x)
        if abs(x_new - x) <= tol:
            return x_new
        x = x_new
    raise RuntimeError("Banach iteration did not settle")


def fd_jacobian(F, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    f0 = F(x)
    J = np.empty((f0.size, x.size))
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        J[:, j] = (F(x + e) - F(x - e)) / (2 * h)
    return J


def damped_newton(F, x0, jac=None, tol: float = 1e-12, max_iter: int = 200):
    """Newton with Armijo backtracking on |F|; Jacobian by central differences unless given."""
    x = np.array(x0, dtype=float)
    r = F(x)
    for _ in range(max_iter):
        rn = np.linalg.norm(r)
        if rn <= tol:
            return x
        J = jac(x) if jac is not None else fd_jacobian(F, x)
        dx = np.linalg.solve(np.asarray(J, dtype=float), r)
        t = 1.0
        while t > 1e-8:
            x_try = x - t * dx
            r_try = F(x_try)
            if np.linalg.norm(r_try) <= (1 - 1e-4 * t) * rn:
                break
            t *= 0.5
        if np.linalg.norm(r_try) >= rn:
            return x  # round-off floor
        x, r = x_try, r_try
    return x
