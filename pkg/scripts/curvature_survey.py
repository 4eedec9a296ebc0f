"""Ricci scalar range, isotropy spread and validity checks for every built-in structure."""
import argparse

import numpy as np

from finslerflow.builtins import BUILTINS, builtin
from finslerflow.core import PointTM, sample_points, verify_structure
from finslerflow.curvature import isotropy_check, ricci_scalar


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print(f"{'structure':18s} {'min Ric':>12s} {'max Ric':>12s} {'isotropy':>10s} valid")
    for name in sorted(BUILTINS):
        F = builtin(name)
        p = sample_points(F, args.samples, args.seed)
        ric = ricci_scalar(F, p)
        iso = max(isotropy_check(F, PointTM(p.x[:, m], p.y[:, m])) for m in range(min(5, args.samples)))
        ok = verify_structure(F, samples=args.samples, seed=args.seed).passed
        print(f"{name:18s} {ric.min():12.5g} {ric.max():12.5g} {iso:10.2e} {ok}")


if __name__ == "__main__":
    main()
