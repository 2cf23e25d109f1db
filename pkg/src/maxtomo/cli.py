"""Command line entry point.

``maxtomo <forward|impedance|reconstruct|locate|validate> --config <path>
[--out <dir>] [--seed N] [--threads N]``

Failures print ``ERROR <CODE>: message`` on stderr.  Configuration errors
exit with status 2, every other library error with status 1.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import io
from .config import RunConfig, as_complex, load_config
from .core import BoundaryPatch, RefractiveIndexField, WaveParams, make_box_grid
from .errors import ConfigError, MaxtomoError

logger = logging.getLogger("maxtomo")

COMMANDS = ("forward", "impedance", "reconstruct", "locate", "validate")


# ---------------------------------------------------------------------------
# shared setup


def _wave(cfg: RunConfig) -> WaveParams:
    if cfg.wave.k is not None:
        return WaveParams.from_wavenumber(cfg.wave.k)
    return WaveParams(omega=cfg.wave.omega)


def _grid(cfg: RunConfig):
    return make_box_grid(tuple(cfg.grid.extent), tuple(cfg.grid.cells))


def _scenario(cfg: RunConfig, seed: int):
    from .locate import InclusionScenario, synthesize_scenario

    inc = cfg.medium.inclusions
    nj = as_complex(inc.index)
    if inc.centers is not None:
        m = len(inc.centers)
        return InclusionScenario(np.array(inc.centers, float).reshape(-1, 3), inc.alpha, [nj] * m, inc.c0, inc.c,
                                 tuple(cfg.grid.extent))
    sc = synthesize_scenario(seed, inc.m, inc.c0, inc.c, inc.alpha, extent=tuple(cfg.grid.extent))
    return InclusionScenario(sc.centers, sc.alpha, [nj] * sc.m, sc.c0, sc.c, sc.extent)


def _media(cfg: RunConfig, grid, seed: int):
    """Return ``(medium, background, scenario_or_None)`` index fields."""
    from .locate import perturbed_index
    from .recon import GaussianBump

    n0 = as_complex(cfg.medium.background)
    back = RefractiveIndexField.homogeneous(grid, n0)
    kind = cfg.medium.kind
    if kind == "homogeneous":
        return back, back, None
    if kind == "gaussian":
        g = cfg.medium.gaussian
        bump = GaussianBump(tuple(g.center), g.sigma, as_complex(g.amplitude), g.cutoff)
        return bump.index(grid, n0), back, None
    sc = _scenario(cfg, seed)
    return perturbed_index(sc, back, grid), back, sc


def _probes(cfg: RunConfig):
    from .recon import ProbeSettings

    p = cfg.probes
    return ProbeSettings(kind=p.kind, convention=p.convention, margin=p.margin, reg=p.reg, guard=p.guard)


def _lgrid(cfg: RunConfig, k: float, n0: complex):
    from .recon import LGrid

    g = cfg.lgrid
    return LGrid(tuple(cfg.grid.extent), g.l_max_factor * k, k, g.schedule, g.c_k, g.c_l, g.s_floor, n0=n0)


# ---------------------------------------------------------------------------
# commands


def cmd_forward(cfg: RunConfig, out: Path, seed: int) -> dict:
    from .forward import assemble, discrete_l2, plane_wave, solve_bvp
    from .core import TangentialField
    from .impedance import cell_average, random_patch_data

    grid, wp = _grid(cfg), _wave(cfg)
    n, _, _ = _media(cfg, grid, seed)
    patch = BoundaryPatch.full(grid) if cfg.forward.full_boundary else BoundaryPatch.from_faces(grid, cfg.boundary.faces)
    report: dict = {"command": "forward", "k": wp.k, "cells": "x".join(map(str, grid.cells))}
    exact = None
    if cfg.forward.data == "plane_wave":
        n0 = as_complex(cfg.medium.background)
        kn = wp.k * np.sqrt(n0)
        d = np.asarray(cfg.forward.direction, float)
        p = np.asarray(cfg.forward.polarization, float)
        d = d / np.linalg.norm(d)
        p = p - (p @ d) * d
        p = p / np.linalg.norm(p)
        E_fun = plane_wave(kn, d, p)
        f = TangentialField.from_vector_field(patch, E_fun)
        if cfg.medium.kind == "homogeneous":
            exact = grid.sample(E_fun)
    else:
        f = random_patch_data(patch, seed)
    sys_ = assemble(grid, n, wp)
    sol = solve_bvp(sys_, f)
    cells = cell_average(grid, sol.E)
    for d, axis in enumerate("xyz"):
        io.VolumeFile(cells[..., d], grid.spacing, "field").write(out / f"field_{axis}.mxc")
    report["field_norm"] = discrete_l2(grid, sol.E)
    report["cond_estimate"] = float(sys_.cond_estimate or np.nan)
    if exact is not None:
        report["relative_l2_error"] = discrete_l2(grid, sol.E - exact) / discrete_l2(grid, exact)
    return report


def _impedance_pair(cfg: RunConfig, seed: int, keep_fields: bool):
    from .impedance import assemble_impedance

    grid, wp = _grid(cfg), _wave(cfg)
    patch = BoundaryPatch.from_faces(grid, cfg.boundary.faces)
    n, back, sc = _media(cfg, grid, seed)
    Zb = assemble_impedance(back, grid, patch, wp, keep_fields=keep_fields)
    Zn = Zb if n is back else assemble_impedance(n, grid, patch, wp)
    return grid, wp, patch, n, back, sc, Zn, Zb


def cmd_impedance(cfg: RunConfig, out: Path, seed: int) -> dict:
    from .impedance import assemble_impedance

    grid, wp = _grid(cfg), _wave(cfg)
    patch = BoundaryPatch.from_faces(grid, cfg.boundary.faces)
    n, _, _ = _media(cfg, grid, seed)
    Z = assemble_impedance(n, grid, patch, wp)
    io.VolumeFile(Z.matrix, (1.0, 1.0, 1.0), "impedance").write(out / "impedance.mxc")
    W = Z.weighted()
    return {
        "command": "impedance",
        "k": wp.k,
        "size": Z.size,
        "norm": Z.norm(),
        "symmetry_defect": float(np.linalg.norm(W - W.T) / max(np.linalg.norm(W), 1e-300)),
        "cond_estimate": float(Z.cond_estimate or np.nan),
    }


def cmd_reconstruct(cfg: RunConfig, out: Path, seed: int) -> dict:
    from .recon import invert_fourier, relative_l2, scan_fourier

    grid, wp, patch, n, back, _, Zn, Zb = _impedance_pair(cfg, seed, keep_fields=cfg.probes.kind == "projected")
    n0 = as_complex(cfg.medium.background)
    lgrid = _lgrid(cfg, wp.k, n0)
    table = scan_fourier(Zn, Zb, lgrid, cfg.recon.route, _probes(cfg), reg=cfg.recon.reg, rhs=cfg.recon.rhs)
    vol = invert_fourier(table, grid, cfg.recon.window, lgrid.l_max)
    io.write_fourier_csv(table, out / "fourier.csv")
    io.VolumeFile(vol.values, grid.spacing, "contrast").write(out / "contrast.mxc")
    report = {
        "command": "reconstruct",
        "k": wp.k,
        "l_max": lgrid.l_max,
        "samples": len(table),
        "failed_samples": int((~table.ok).sum()),
        "hermitian_defect": table.hermitian_defect(),
        "peak_x": float(vol.peak()[0]),
        "peak_y": float(vol.peak()[1]),
        "peak_z": float(vol.peak()[2]),
    }
    if cfg.medium.kind == "gaussian":
        from .recon import GaussianBump

        g = cfg.medium.gaussian
        bump = GaussianBump(tuple(g.center), g.sigma, as_complex(g.amplitude), g.cutoff)
        report["relative_l2_error"] = relative_l2(vol.values, bump(grid.cell_centers()))
    return report


def cmd_locate(cfg: RunConfig, out: Path, seed: int) -> dict:
    from .locate import LocateSettings, localize_and_recover

    if cfg.medium.kind != "inclusions":
        raise ConfigError("locate needs medium.kind = 'inclusions'")
    grid, wp, patch, n, back, sc, Zn, Zb = _impedance_pair(cfg, seed, keep_fields=cfg.probes.kind == "projected")
    n0 = as_complex(cfg.medium.background)
    lgrid = _lgrid(cfg, wp.k, n0)
    loc = cfg.locate
    settings = LocateSettings(
        c0=cfg.medium.inclusions.c0,
        window=cfg.recon.window,
        local_radius=loc.local_radius,
        refine=loc.refine,
        l_moment=loc.l_moment_factor * wp.k,
    )
    m = loc.expected_m if loc.expected_m is not None else sc.m
    res = localize_and_recover(Zn, Zb, lgrid, m, settings, _probes(cfg))
    io.write_centers_csv(res.centers, res.moments, out / "centers.csv")
    io.write_scenario(sc, out / "scenario.csv")
    io.write_fourier_csv(res.table, out / "fourier.csv")
    report = {"command": "locate", "k": wp.k, "found": len(res.centers), "planted": sc.m}
    if sc.m and len(res.centers):
        d = np.linalg.norm(res.centers[:, None, :] - sc.centers[None], axis=2)
        report["max_center_error"] = float(np.max(np.min(d, axis=0)))
        planted = sc.planted_moments(n0)
        match = np.argmin(d, axis=0)
        q = np.array([res.moments[i].q for i in match])
        report["max_moment_rel_error"] = float(np.max(np.abs(q - planted) / np.abs(planted)))
    return report


def cmd_validate(cfg: RunConfig, out: Path, seed: int) -> dict:
    """Quick invariant checks that do not need large solves."""
    from .cgo import cgo_pair, g_of_s, g_printed, random_frame
    from .impedance import assemble_impedance

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(50):
        l = rng.normal(size=3) * 10
        k = rng.uniform(1, 20)
        s = rng.uniform(1, 5) * (np.linalg.norm(l) / 2 + k)
        pair = cgo_pair(random_frame(rng, l, s, k, k**2))
        worst = max(worst, max(pair.defects().values()))
    k = 3.0
    l = np.array([1.0, 2.0, 2.0])
    s_big = 1e3
    g_gap = abs(g_of_s(s_big, l, k) - g_printed(s_big, l, k))
    g_bound = (l @ l + 4 * k**2) / s_big**2
    grid = make_box_grid((1.0, 1.0, 1.0), 6)
    patch = BoundaryPatch.from_faces(grid, ("z+",))
    wp = WaveParams.from_wavenumber(k)
    back = RefractiveIndexField.homogeneous(grid, 1.0)
    Z = assemble_impedance(back, grid, patch, wp)
    W = Z.weighted()
    sym = float(np.linalg.norm(W - W.T) / np.linalg.norm(W))
    raw = io.VolumeFile(rng.normal(size=(3, 4, 5)) + 1j * rng.normal(size=(3, 4, 5)), (0.1, 0.2, 0.3)).to_bytes()
    round_trip = io.VolumeFile.from_bytes(raw).to_bytes() == raw
    checks = {"cgo_defect": worst < 1e-10, "g_gap": g_gap <= g_bound, "z_symmetry": sym < 1e-10, "format": round_trip}
    return {
        "command": "validate",
        "cgo_max_defect": worst,
        "g_corrected_vs_printed": g_gap,
        "impedance_symmetry_defect": sym,
        "volume_round_trip": round_trip,
        "all_passed": all(checks.values()),
    }


HANDLERS = {
    "forward": cmd_forward,
    "impedance": cmd_impedance,
    "reconstruct": cmd_reconstruct,
    "locate": cmd_locate,
    "validate": cmd_validate,
}


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="maxtomo", description="Maxwell impedance tomography toolkit")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="TOML run configuration")
    p.add_argument("--out", default=None, help="output directory (overrides config 'out')")
    p.add_argument("--seed", type=int, default=None, help="random seed (overrides config 'seed')")
    p.add_argument("--threads", type=int, default=1, help="BLAS/LAPACK threads")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load_config(args.config)
        seed = cfg.seed if args.seed is None else args.seed
        if seed < 0:
            raise ConfigError("--seed must be non-negative")
        out = Path(args.out if args.out is not None else cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        with threadpool_limits(limits=args.threads):
            report = HANDLERS[args.command](cfg, out, seed)
        report["seed"] = seed
        io.write_report(report, out / "report.csv")
        logger.info("%s finished in %.2f s", args.command, time.perf_counter() - t0)
        for key, val in report.items():
            print(f"{key} = {val}")
        if args.command == "validate" and not report["all_passed"]:
            return 1
        return 0
    except ConfigError as exc:
        print(f"ERROR {exc.code}: {exc}", file=sys.stderr)
        return 2
    except MaxtomoError as exc:
        print(f"ERROR {exc.code}: {exc}", file=sys.stderr)
        return 1


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":  # pragma: no cover
    main()
