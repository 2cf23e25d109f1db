"""Small-inclusion media, their asymptotic boundary signature, and recovery of
inclusion centres and effective moments from Fourier samples.

For ``m`` balls ``z_j + alpha B`` with indices ``n_j`` in a background ``n``,

    Lambda(l) ~ sum_j q_j exp(i l . z_j),   q_j = alpha^3 (n_j - n(z_j)) M_j,

where ``M_j`` is the polarization tensor of the scaled inclusion (scalar
``(4 pi / 3) 3 n / (n_j + 2 n)`` for a ball in the quasi-static limit).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, optimize

from .core import BoundaryPatch, BoxGrid, RefractiveIndexField, TangentialField, WaveParams
from .errors import Infeasible, NoPeaks, RankDeficient, UnderResolved
from .forward import assemble, solve_bvp, variational_trace
from .impedance import ImpedanceOperator
from .recon import (
    ContrastVolume,
    FourierTable,
    LGrid,
    ProbeSettings,
    ProbeShaper,
    invert_fourier,
    region_mask,
    scan_fourier,
)

logger = logging.getLogger(__name__)

SAMPLING_BUDGET = 10_000
PEAK_FACTOR = 3.0
RANK_TOL = 1e-8


@dataclass(frozen=True)
class InclusionScenario:
    """Balls of common radius ``alpha`` with complex indices ``indices``.

    ``c0`` is the minimum centre separation and ``c`` the minimum centre
    distance to the box surface.
    """

    centers: np.ndarray
    alpha: float
    indices: np.ndarray
    c0: float
    c: float
    extent: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=float).reshape(-1, 3)
        indices = np.broadcast_to(np.asarray(self.indices, dtype=complex), (len(centers),)).copy()
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "indices", indices)
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if np.any(indices.real <= 0) or np.any(indices.imag < 0):
            raise ValueError("inclusion indices need Re > 0 and Im >= 0")
        ext = np.asarray(self.extent, dtype=float)
        if len(centers):
            if np.any(np.minimum(centers, ext - centers) < self.c - 1e-12):
                raise ValueError("a centre violates the boundary clearance c")
            if len(centers) > 1:
                d = np.linalg.norm(centers[:, None] - centers[None], axis=-1)
                if d[np.triu_indices(len(centers), 1)].min() < self.c0 - 1e-12:
                    raise ValueError("centres closer than c0")
        if self.alpha > self.alpha_max:
            raise ValueError(f"alpha {self.alpha} exceeds alpha_max {self.alpha_max}")

    @property
    def m(self) -> int:
        return len(self.centers)

    @property
    def alpha_max(self) -> float:
        """Largest radius keeping balls disjoint and inside the box."""
        return min(self.c0 / 2, self.c)

    def contrasts(self, background: complex = 1.0) -> np.ndarray:
        return self.indices - background

    def planted_moments(self, background: complex = 1.0) -> np.ndarray:
        """``alpha^3 (n_j - n) (4 pi/3) 3n / (n_j + 2n)`` for each ball."""
        n = complex(background)
        M = (4 * np.pi / 3) * 3 * n / (self.indices + 2 * n)
        return self.alpha**3 * (self.indices - n) * M

    def shifted(self, delta) -> "InclusionScenario":
        return InclusionScenario(self.centers + np.asarray(delta), self.alpha, self.indices, self.c0, 0.0, self.extent)


def synthesize_scenario(
    seed: int,
    m: int,
    c0: float,
    c: float,
    alpha: float,
    index_range=((1.5, 2.5), (0.0, 0.5)),
    extent=(1.0, 1.0, 1.0),
    budget: int = SAMPLING_BUDGET,
) -> InclusionScenario:
    """Rejection-sample ``m`` centres with separation ``c0`` and clearance ``c``."""
    rng = np.random.default_rng(seed)
    ext = np.asarray(extent, dtype=float)
    if np.any(ext <= 2 * c):
        raise Infeasible(f"clearance {c} leaves no room in box {tuple(ext)}")
    if alpha > min(c0 / 2, c):
        raise Infeasible(f"alpha {alpha} too large for c0={c0}, c={c}")
    centers: list[np.ndarray] = []
    draws = 0
    while len(centers) < m:
        if draws >= budget:
            raise Infeasible(f"placed {len(centers)} of {m} inclusions within {budget} draws")
        draws += 1
        z = c + rng.random(3) * (ext - 2 * c)
        if all(np.linalg.norm(z - p) >= c0 for p in centers):
            centers.append(z)
    (re_lo, re_hi), (im_lo, im_hi) = index_range
    idx = rng.uniform(re_lo, re_hi, m) + 1j * rng.uniform(im_lo, im_hi, m)
    return InclusionScenario(np.array(centers).reshape(-1, 3), alpha, idx, c0, c, tuple(ext))


def perturbed_index(
    scenario: InclusionScenario,
    background: RefractiveIndexField,
    grid: BoxGrid,
    fill: str = "fraction",
    subsamples: int = 4,
) -> RefractiveIndexField:
    """Background index perturbed by the balls of ``scenario``.

    ``fill='fraction'`` blends ``n_j`` into each edge by the fraction of its
    dual cell covered by the ball (``subsamples**3`` points per cell), so the
    discrete inclusion volume tracks ``4 pi alpha^3 / 3`` smoothly in alpha.
    ``fill='midpoint'`` assigns ``n_j`` to edges whose midpoint is inside.

    Raises :class:`UnderResolved` unless each ball spans at least two cells
    (``alpha >= h``).
    """
    if background.grid != grid:
        raise ValueError("background lives on a different grid")
    if fill not in ("fraction", "midpoint"):
        raise ValueError(f"unknown fill {fill!r}")
    if scenario.m == 0:
        return background
    h = float(np.max(grid.spacing))
    if scenario.alpha < h * (1 - 1e-12):
        raise UnderResolved(f"alpha = {scenario.alpha:.4g} < h = {h:.4g}: fewer than two cells across")
    vals = background.values.copy()
    pts = grid.edge_midpoints
    a = scenario.alpha
    if fill == "fraction":
        u = (np.arange(subsamples) + 0.5) / subsamples - 0.5
        offs = np.stack(np.meshgrid(u, u, u, indexing="ij"), axis=-1).reshape(-1, 3) * np.asarray(grid.spacing)
        reach = a + 0.5 * float(np.linalg.norm(grid.spacing))
    for z, nj in zip(scenario.centers, scenario.indices):
        d = np.linalg.norm(pts - z, axis=1)
        if fill == "midpoint":
            vals[d < a] = nj
            continue
        near = np.flatnonzero(d < reach)
        frac = np.mean(np.linalg.norm(pts[near, None, :] + offs[None] - z, axis=2) < a, axis=1)
        vals[near] += frac * (nj - background.values[near])
    return RefractiveIndexField(grid, vals, background.background)


def asymptotic_functional(scenario: InclusionScenario, E_probe, V_probe, M=None, background: complex = 1.0) -> complex:
    """Leading-order value ``alpha^3 sum_j (n_j - n) (M_j E(z_j)) . V(z_j)``.

    ``E_probe, V_probe`` are callables of points (m, 3) -> (m, 3).  ``M`` is
    a 3x3 matrix, a list of them, or ``None`` for the quasi-static ball
    tensor.
    """
    if scenario.m == 0:
        return 0j
    z = scenario.centers
    E = np.asarray(E_probe(z), dtype=complex).reshape(-1, 3)
    V = np.asarray(V_probe(z), dtype=complex).reshape(-1, 3)
    n = complex(background)
    if M is None:
        Ms = [(4 * np.pi / 3) * 3 * n / (nj + 2 * n) * np.eye(3) for nj in scenario.indices]
    else:
        M = np.asarray(M, dtype=complex)
        Ms = [M] * scenario.m if M.ndim == 2 else list(M)
    total = 0j
    for j in range(scenario.m):
        total += (scenario.indices[j] - n) * (Ms[j] @ E[j]) @ V[j]
    return complex(scenario.alpha**3 * total)


def surrogate_table(scenario: InclusionScenario, l: np.ndarray, background: complex = 1.0) -> FourierTable:
    """Fourier samples generated by the asymptotic model with ``E . V = exp(i l . x)``."""
    q = scenario.planted_moments(background)
    vals = np.exp(1j * np.asarray(l) @ scenario.centers.T) @ q if scenario.m else np.zeros(len(l), complex)
    n = len(l)
    return FourierTable(np.asarray(l), vals, np.zeros(n), "surrogate", np.ones(n, bool), np.zeros(n), scenario.extent)


@dataclass(frozen=True)
class EffectiveMoment:
    """Scalar effective moment ``q_j``; ``tensor`` is ``q_j I`` (isotropic reduction)."""

    j: int
    center: np.ndarray
    q: complex
    planted: bool = False

    @property
    def tensor(self) -> np.ndarray:
        return self.q * np.eye(3)


@dataclass
class LocateResult:
    centers: np.ndarray
    moments: list[EffectiveMoment]
    volume: ContrastVolume | None = None
    table: FourierTable | None = None
    peaks: np.ndarray | None = None
    info: dict = field(default_factory=dict)


@dataclass(frozen=True)
class LocateSettings:
    """Tuning of the localisation pipeline.

    ``c0`` sets the non-maximum-suppression radius ``c0/2``.  ``local_radius``
    is the radius of the balls around detected peaks used to re-shape the
    probes for the refinement stage.  ``l_fit`` and ``l_moment`` cap ``|l|``
    in the centre refinement and moment fit (``None``: ``k`` for moments,
    everything for centres).
    """

    c0: float = 0.3
    window: str = "none"
    local_radius: float = 0.1
    refine: bool = True
    l_fit: float | None = None
    l_moment: float | None = None
    max_shift: float | None = None


def find_peaks(volume: ContrastVolume, radius: float, expected_m: int | None = None, factor: float = PEAK_FACTOR):
    """Local maxima of ``|volume|`` above ``factor x median``, thinned by distance."""
    a = np.abs(volume.values)
    thresh = factor * np.median(a)
    is_max = (a == ndimage.maximum_filter(a, size=3, mode="nearest")) & (a > thresh) & (a > 0)
    idx = np.argwhere(is_max)
    if len(idx) == 0:
        raise NoPeaks(f"no local maximum above {factor} x median |volume| = {thresh:.3g}")
    vals = a[tuple(idx.T)]
    order = np.lexsort((idx[:, 2], idx[:, 1], idx[:, 0], -vals))
    pts = volume.grid.cell_centers()[tuple(idx[order].T)]
    keep: list[np.ndarray] = []
    for p in pts:
        if all(np.linalg.norm(p - q) >= radius for q in keep):
            keep.append(p)
    if expected_m is not None:
        keep = keep[:expected_m]
    return np.array(keep)


def fit_moments(table: FourierTable, centers: np.ndarray, l_cap: float | None = None) -> np.ndarray:
    """Least squares ``Lambda(l) = sum_j q_j exp(i l . z_j)`` for fixed centres."""
    sel = table.ok.copy()
    if l_cap is not None:
        sel &= np.linalg.norm(table.l, axis=1) <= l_cap * (1 + 1e-12)
    B = np.exp(1j * table.l[sel] @ np.asarray(centers).T)
    if B.shape[0] < B.shape[1]:
        raise RankDeficient(f"{B.shape[0]} samples for {B.shape[1]} moments")
    sv = np.linalg.svd(B, compute_uv=False)
    if sv[-1] <= RANK_TOL * sv[0]:
        raise RankDeficient(f"moment system singular (sv ratio {sv[-1] / sv[0]:.2e}); centres too close")
    q, *_ = np.linalg.lstsq(B, table.values[sel], rcond=None)
    return q


def refine_centers(table: FourierTable, centers: np.ndarray, l_cap: float | None = None, max_shift: float = 0.1):
    """Variable-projection least squares for centres (moments eliminated)."""
    sel = table.ok.copy()
    if l_cap is not None:
        sel &= np.linalg.norm(table.l, axis=1) <= l_cap * (1 + 1e-12)
    L, y = table.l[sel], table.values[sel]
    z0 = np.asarray(centers, dtype=float)
    m = len(z0)

    def resid(z):
        B = np.exp(1j * L @ z.reshape(m, 3).T)
        q, *_ = np.linalg.lstsq(B, y, rcond=None)
        r = B @ q - y
        return np.concatenate([r.real, r.imag])

    sol = optimize.least_squares(
        resid,
        z0.ravel(),
        bounds=((z0 - max_shift).ravel(), (z0 + max_shift).ravel()),
        xtol=1e-14,
        ftol=1e-14,
        gtol=1e-14,
        method="trf",
    )
    return sol.x.reshape(m, 3), float(np.linalg.norm(sol.fun) / max(np.linalg.norm(y), 1e-300))


def localize_from_table(
    table: FourierTable,
    grid: BoxGrid,
    expected_m: int | None = None,
    settings: LocateSettings = LocateSettings(),
    refine_table=None,
) -> LocateResult:
    """Peaks of the inverted volume, optional refinement, then moments.

    ``refine_table`` is a callable ``centers -> FourierTable`` giving the
    samples used for refinement and moments (defaults to ``table``).
    """
    vol = invert_fourier(table, grid, settings.window)
    peaks = find_peaks(vol, settings.c0 / 2, expected_m)
    centers = peaks
    info: dict = {}
    fit_table = refine_table(peaks) if refine_table is not None else table
    if settings.refine:
        shift = settings.max_shift if settings.max_shift is not None else 2 * float(np.max(grid.spacing))
        centers, info["refine_residual"] = refine_centers(fit_table, peaks, settings.l_fit, shift)
    q = fit_moments(fit_table, centers, settings.l_moment)
    moments = [EffectiveMoment(j, centers[j], complex(q[j])) for j in range(len(centers))]
    return LocateResult(centers, moments, vol, table, peaks, info)


def localize_and_recover(
    Z_pert: ImpedanceOperator,
    Z_back: ImpedanceOperator,
    lgrid: LGrid,
    expected_m: int | None = None,
    settings: LocateSettings = LocateSettings(),
    probes: ProbeSettings = ProbeSettings(),
) -> LocateResult:
    """Scan, invert, detect peaks, re-probe locally, refine centres, fit moments.

    The refinement stage re-shapes the probing data to match the CGO fields
    only on balls of radius ``local_radius`` around the detected peaks,
    which sharpens the point-source model used by the least-squares fits.
    """
    grid = Z_back.patch.grid
    table = scan_fourier(Z_pert, Z_back, lgrid, "linearized", probes)

    def local_table(peaks):
        if probes.kind != "projected":
            return table
        mask = region_mask(grid, balls=[(p, settings.local_radius) for p in peaks])
        shaper = ProbeShaper.build(Z_back, mask, probes.reg)
        return scan_fourier(Z_pert, Z_back, lgrid, "linearized", probes, shaper=shaper)

    vol = invert_fourier(table, grid, settings.window)
    peaks = find_peaks(vol, settings.c0 / 2, expected_m)
    fit_table = local_table(peaks)
    centers, info = peaks, {"k": lgrid.k}
    if settings.refine:
        shift = settings.max_shift if settings.max_shift is not None else 2 * float(np.max(grid.spacing))
        centers, info["refine_residual"] = refine_centers(fit_table, peaks, settings.l_fit, shift)
    l_mom = settings.l_moment if settings.l_moment is not None else lgrid.k
    q = fit_moments(fit_table, centers, l_mom)
    info["moment_fit_residual"] = _fit_residual(fit_table, centers, q, l_mom)
    moments = [EffectiveMoment(j, centers[j], complex(q[j])) for j in range(len(centers))]
    return LocateResult(centers, moments, vol, table, peaks, {**info, "local_table": fit_table})


def _fit_residual(table: FourierTable, centers, q, l_cap) -> float:
    sel = table.ok & (np.linalg.norm(table.l, axis=1) <= l_cap * (1 + 1e-12))
    B = np.exp(1j * table.l[sel] @ np.asarray(centers).T)
    y = table.values[sel]
    return float(np.linalg.norm(B @ q - y) / max(np.linalg.norm(y), 1e-300))


# ---------------------------------------------------------------------------
# alpha scaling of the boundary functional


def boundary_functional(
    n_pert: RefractiveIndexField,
    n_back: RefractiveIndexField,
    f1: TangentialField,
    f2: TangentialField,
    patch: BoundaryPatch,
    wp: WaveParams,
    back_trace: np.ndarray | None = None,
):
    """``k^-2 int_Gamma f1 . (Z_pert - Z_back) f2 ds`` from two forward solves.

    Returns the value and the background trace so it can be reused.
    """
    grid = patch.grid

    def trace(n):
        sys_ = assemble(grid, n, wp)
        sol = solve_bvp(sys_, f2)
        return variational_trace(sys_, sol.E, patch)

    tb = trace(n_back) if back_trace is None else back_trace
    tp = trace(n_pert)
    f1v = f1.restrict(patch).values
    return complex(np.sum(patch.area * f1v * (tp - tb)) / wp.k**2), tb


@dataclass
class ScalingStudy:
    alphas: np.ndarray
    values: np.ndarray
    exponent: float


def alpha_scaling(
    grid: BoxGrid,
    wp: WaveParams,
    patch: BoundaryPatch,
    center,
    alphas,
    index: complex,
    f1: TangentialField,
    f2: TangentialField,
    background: complex = 1.0,
) -> ScalingStudy:
    """Fit ``log |F(alpha)|`` against ``log alpha`` for a single ball."""
    nb = RefractiveIndexField.homogeneous(grid, background)
    vals, tb = [], None
    for a in alphas:
        sc = InclusionScenario(np.asarray(center)[None], a, [index], c0=1.0, c=a)
        F, tb = boundary_functional(perturbed_index(sc, nb, grid), nb, f1, f2, patch, wp, tb)
        vals.append(F)
    vals = np.array(vals)
    slope = float(np.polyfit(np.log(alphas), np.log(np.abs(vals)), 1)[0])
    return ScalingStudy(np.asarray(alphas, dtype=float), vals, slope)
