"""Largest solved target norm per radius, and its slope against 1 - sigma."""
import argparse
import json
from pathlib import Path

import numpy as np

from compsolve.cli import sweep_rows

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=str(CONFIGS / "sweep.json"))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rows = sweep_rows(json.loads(Path(args.config).read_text()), args.seed)
    radii = sorted({r["r"] for r in rows})
    best = []
    for R in radii:
        solved = [r["ynorm"] for r in rows if r["r"] == R and r["outcome"] == "Converged"]
        best.append(max(solved, default=0.0))
        sigma = next(r["sigma"] for r in rows if r["r"] == R)
        print(f"r={R:g}  sigma={sigma}  largest solved |y|={best[-1]:g}")
    sigmas = [r["sigma"] for r in rows if r["sigma"] is not None]
    if len(radii) > 1 and sigmas:
        slope = np.polyfit(radii, best, 1)[0]
        print(f"slope {slope:.4f}, 1 - sigma {1 - np.mean(sigmas):.4f}")


if __name__ == "__main__":
    main()
