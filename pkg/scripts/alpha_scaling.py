"""Fit the small-inclusion exponent of the boundary functional.

Usage: python scripts/alpha_scaling.py [--cells 32] [--k 3.3]
"""

import argparse

from maxtomo.core import BoundaryPatch, WaveParams, make_box_grid
from maxtomo.impedance import random_patch_data
from maxtomo.locate import alpha_scaling


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cells", type=int, default=32)
    ap.add_argument("--k", type=float, default=3.3)
    ap.add_argument("--alphas", type=float, nargs="+", default=[0.04, 0.06, 0.09])
    args = ap.parse_args()
    g = make_box_grid((1, 1, 1), args.cells)
    top = BoundaryPatch.from_faces(g, ("z+",))
    study = alpha_scaling(
        g, WaveParams.from_wavenumber(args.k), top, (0.5, 0.5, 0.5), args.alphas, 2 + 0.5j,
        random_patch_data(top, 1), random_patch_data(top, 2),
    )
    for a, v in zip(study.alphas, study.values):
        print(f"alpha={a:.3f}  |F|={abs(v):.6e}")
    print(f"exponent = {study.exponent:.4f}")


if __name__ == "__main__":
    main()
