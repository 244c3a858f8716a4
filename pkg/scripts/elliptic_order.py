"""Consistency order of the discrete operator against u = prod sin(pi x_i), and a solve at each n."""
import argparse

import numpy as np

from compsolve.grid import Grid
from compsolve.pde.elliptic import (EllipticCoefficients, build_elliptic_operator, const,
                                    laplace_coefficient, manufactured_rhs, modulated_coefficient,
                                    solve_elliptic)
from compsolve.solve import SolveConfig
from compsolve.spaces import phi_lorentzian, phi_one


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--dim", type=int, default=1)
    ap.add_argument("--sizes", type=int, nargs="+", default=[17, 33, 65, 129])
    args = ap.parse_args()

    phi = phi_lorentzian(1.0, 1.0)
    prev = None
    print("n,consistency_err,order,iterations,recovery_err")
    for n in args.sizes:
        g = Grid(args.dim, n)
        lap = build_elliptic_operator(g, EllipticCoefficients(phi_one(), const(1), const(1)),
                                      laplace_coefficient())
        u = np.prod(np.sin(np.pi * g.nodes), axis=1)
        err = np.abs(lap.f.fn(u) - args.dim * np.pi**2 * u).max()
        order = "" if prev is None else f"{np.log2(prev / err):.3f}"
        prev = err

        d = build_elliptic_operator(g, EllipticCoefficients(phi, const(1.75), const(1.25)),
                                    modulated_coefficient(phi))
        t = solve_elliptic(d, manufactured_rhs(d, u), SolveConfig(tol=1e-11, max_iter=400))
        print(f"{n},{err:.6e},{order},{t.iterations},{np.abs(t.x - u).max():.3e}")


if __name__ == "__main__":
    main()
