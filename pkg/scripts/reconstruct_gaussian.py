"""Reconstruct a planted Gaussian contrast for several l_max values.

Usage: python scripts/reconstruct_gaussian.py [--cells 16] [--k 15.3]
"""

import argparse

from maxtomo.core import BoundaryPatch, RefractiveIndexField, WaveParams, make_box_grid
from maxtomo.impedance import assemble_impedance
from maxtomo.recon import (
    GaussianBump,
    LGrid,
    ProbeSettings,
    ProbeShaper,
    invert_fourier,
    region_mask,
    relative_l2,
    scan_fourier,
)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cells", type=int, default=16)
    ap.add_argument("--k", type=float, default=15.3)
    ap.add_argument("--window", choices=("none", "hann"), default="none")
    args = ap.parse_args()
    g = make_box_grid((1, 1, 1), args.cells)
    wp = WaveParams.from_wavenumber(args.k)
    top = BoundaryPatch.from_faces(g, ("z+",))
    bump = GaussianBump(center=(0.5, 0.5, 0.5), sigma=0.08, amplitude=0.05)
    Zr = assemble_impedance(RefractiveIndexField.homogeneous(g), g, top, wp, keep_fields=True)
    Zn = assemble_impedance(bump.index(g), g, top, wp)
    ps = ProbeSettings()
    shaper = ProbeShaper.build(Zr, region_mask(g, ps.region, ps.margin), ps.reg)
    truth = bump(g.cell_centers())
    for factor in (1.0, 1.5, 2.0):
        lg = LGrid((1, 1, 1), factor * args.k, args.k)
        table = scan_fourier(Zn, Zr, lg, settings=ps, shaper=shaper)
        vol = invert_fourier(table, g, args.window, lg.l_max)
        print(f"l_max={factor:.1f}k  samples={len(table)}  rel L2={relative_l2(vol.values, truth):.4f}  "
              f"peak={vol.peak()}")


if __name__ == "__main__":
    main()
