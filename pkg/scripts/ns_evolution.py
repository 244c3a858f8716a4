"""Implicit Euler run towards the steady Galerkin solution, printing the gap and energy slack."""
import argparse

import numpy as np

from compsolve.pde.navier_stokes import (NSConfig, StreamFunctionBasis, build_ns_operator, evolve_ns,
                                         solve_ns_steady)
from compsolve.solve import SolveConfig
from compsolve.spaces import phi_rational


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--modes", type=int, default=4)
    ap.add_argument("--nu", type=float, default=1.0)
    ap.add_argument("--amp", type=float, default=40.0)
    ap.add_argument("--T", type=float, default=20.0)
    ap.add_argument("--dt", type=float, default=0.05)
    args = ap.parse_args()

    nu = args.nu
    d = build_ns_operator(NSConfig(nu, nu / 6, phi_rational(nu / 6), StreamFunctionBasis.first(args.modes)))
    h = d.model.load(lambda x, y: (args.amp * np.sin(np.pi * y), args.amp * x * (1 - x)))
    cfg = SolveConfig(tol=1e-12, max_iter=300)
    steady = solve_ns_steady(d, h, cfg)
    ev = evolve_ns(d, h, T=args.T, dt=args.dt, cfg=cfg)
    print("t,gap,energy_slack,iterations")
    every = max(1, len(ev.traces) // 20)
    for k in range(0, len(ev.traces), every):
        gap = np.abs(ev.states[k + 1] - steady.x).max()
        print(f"{ev.times[k + 1]:.3f},{gap:.3e},{ev.energy_slack[k]:.3e},{ev.traces[k].iterations}")
    print(f"# status {ev.status}, energy ok {ev.energy_ok}")


if __name__ == "__main__":
    main()
