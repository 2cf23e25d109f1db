"""Fourier-sample functional and contrast reconstruction.

For probing data ``f1, f2`` on Gamma,

    Lambda = k^-2 int_Gamma f1 . (Z_n - Z_ref) f2 ds = int E_n(f1) (n - n_ref) E_ref(f2) dx,

the second form being the two-medium integral identity.  When the background
solutions generated by ``f1, f2`` are close to ``exp(x . xi_j) eta_j`` on the
region containing the contrast, ``Lambda`` approximates the Fourier transform
of ``n - n_ref`` at ``-l``.  Two kinds of probing data are provided:

``trace``
    the tangential trace of the closed-form CGO field, cut off outside Gamma;
``projected``
    Gamma data whose background solution best matches the CGO field on an
    interior region in the least-squares sense (Tikhonov-filtered SVD of the
    Gamma-to-region solution operator).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .cgo import CgoPair, cgo_pair, cgo_trace, check_overflow, make_frame
from .core import BoxGrid, TangentialField
from .errors import (
    DegenerateEta,
    DimensionMismatch,
    IllConditioned,
    OverflowGuard,
    ScanFailed,
)
from .impedance import ImpedanceOperator

logger = logging.getLogger(__name__)

ILL_CONDITIONED_RESIDUAL = 0.5


# ---------------------------------------------------------------------------
# l-grid and probe settings


@dataclass(frozen=True)
class LGrid:
    """Lattice ``l = 2 pi m / extent`` inside the ball ``|l| <= l_max``.

    ``schedule`` picks the probing scale per sample:

    ``fixed``        ``s = max(c_k k, c_l |l|)``
    ``propagating``  ``s = sqrt(max(k^2 n0 - |l|^2/4, 0) + s_floor^2)``, which with
                     ``xi . xi = -k^2 n0`` makes ``|Re xi| = s_floor`` for ``|l| <= 2k``.
    """

    extent: tuple[float, float, float]
    l_max: float
    k: float
    schedule: str = "propagating"
    c_k: float = 1.5
    c_l: float = 0.75
    s_floor: float = 0.0
    s_min: float = 1e-3
    n0: complex = 1.0

    def __post_init__(self):
        if self.l_max < 0 or self.k <= 0:
            raise ValueError("l_max must be >= 0 and k > 0")
        if self.schedule not in ("fixed", "propagating"):
            raise ValueError(f"unknown s-schedule {self.schedule!r}")

    @property
    def m(self) -> np.ndarray:
        ext = np.asarray(self.extent, dtype=float)
        mmax = np.floor(self.l_max * ext / (2 * np.pi) + 1e-9).astype(int)
        axes = [np.arange(-mm, mm + 1) for mm in mmax]
        M = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        L = 2 * np.pi * M / ext
        keep = np.linalg.norm(L, axis=1) <= self.l_max * (1 + 1e-12)
        return M[keep]

    @property
    def samples(self) -> np.ndarray:
        return 2 * np.pi * self.m / np.asarray(self.extent, dtype=float)

    def __len__(self) -> int:
        return len(self.m)

    def s_of(self, l_norm: float) -> float:
        k = self.k
        if self.schedule == "fixed":
            s = max(self.c_k * k, self.c_l * l_norm)
        else:
            s = np.sqrt(max(k**2 * float(np.real(self.n0)) - l_norm**2 / 4, 0.0) + self.s_floor**2)
        return float(max(s, self.s_min * k))

    def with_lmax(self, l_max: float) -> "LGrid":
        return replace(self, l_max=l_max)


@dataclass(frozen=True)
class ProbeSettings:
    """How probing data are formed from a CGO pair.

    ``convention='physical'`` uses ``xi . xi = -k^2 n0`` so the closed-form
    field solves the background equation; ``'classical'`` uses ``+k^2``.
    ``region`` is the interior box ``(lo, hi)`` where projected probes are
    matched; ``None`` means the box shrunk by ``margin`` on every side.
    """

    kind: str = "projected"
    convention: str = "physical"
    region: tuple | None = None
    margin: float = 0.25
    reg: float = 1e-5
    guard: float = 60.0

    def __post_init__(self):
        if self.kind not in ("projected", "trace"):
            raise ValueError(f"unknown probe kind {self.kind!r}")
        if self.convention not in ("physical", "classical"):
            raise ValueError(f"unknown convention {self.convention!r}")

    def xi_sq(self, k: float, n0: complex = 1.0):
        return -(k**2) * n0 if self.convention == "physical" else k**2


def make_pair(l, lgrid: LGrid, settings: ProbeSettings, s: float | None = None) -> CgoPair:
    l = np.asarray(l, dtype=float)
    s = lgrid.s_of(float(np.linalg.norm(l))) if s is None else s
    return cgo_pair(make_frame(l, s, lgrid.k, settings.xi_sq(lgrid.k, lgrid.n0)))


# ---------------------------------------------------------------------------
# projected probes


def region_mask(grid: BoxGrid, region=None, margin: float = 0.25, balls=None) -> np.ndarray:
    """Edges inside a box ``(lo, hi)`` or a union of balls ``[(center, radius), ...]``."""
    pts = grid.edge_midpoints
    if balls is not None:
        mask = np.zeros(len(pts), dtype=bool)
        for c, r in balls:
            mask |= np.linalg.norm(pts - np.asarray(c), axis=1) <= r
        return mask
    ext = np.asarray(grid.extent, dtype=float)
    if region is None:
        lo, hi = margin * ext, (1 - margin) * ext
    else:
        lo, hi = (np.asarray(v, dtype=float) for v in region)
    return np.all((pts >= lo) & (pts <= hi), axis=1)


@dataclass(eq=False)
class ProbeShaper:
    """Least-squares fit of Gamma data to a target field on an interior region.

    Minimises ``|| S f - V ||_O^2 + (reg sigma_max)^2 || f ||^2`` where ``S``
    maps Gamma data to background solutions on the region ``O``.
    """

    reference: ImpedanceOperator
    mask: np.ndarray
    reg: float
    U: np.ndarray = field(repr=False)
    sv: np.ndarray = field(repr=False)
    Vh: np.ndarray = field(repr=False)
    sqrt_w: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, reference: ImpedanceOperator, mask: np.ndarray, reg: float = 1e-5) -> "ProbeShaper":
        if reference.fields is None:
            raise ValueError("reference impedance operator must keep its interior fields")
        if not np.any(mask):
            raise ValueError("empty probing region")
        grid = reference.patch.grid
        sqrt_w = np.sqrt(grid.edge_volumes[mask])
        S = reference.fields[mask] * sqrt_w[:, None]
        U, sv, Vh = np.linalg.svd(S, full_matrices=False)
        return cls(reference, mask, reg, U, sv, Vh, sqrt_w)

    @property
    def grid(self) -> BoxGrid:
        return self.reference.patch.grid

    def target(self, xi, eta) -> np.ndarray:
        grid = self.grid
        pts = grid.edge_midpoints[self.mask]
        fam = grid.edge_family[self.mask]
        return np.exp(pts @ np.asarray(xi)) * np.asarray(eta)[fam]

    def project(self, xi, eta) -> tuple[TangentialField, float]:
        b = self.target(xi, eta) * self.sqrt_w
        c = self.U.conj().T @ b
        sv = self.sv
        filt = sv / (sv**2 + (self.reg * sv[0]) ** 2)
        f = self.Vh.conj().T @ (filt * c)
        fit = self.U @ (sv * (self.Vh @ f))
        res = float(np.linalg.norm(fit - b) / max(np.linalg.norm(b), 1e-300))
        return TangentialField(self.reference.patch, f), res


def probe_data(pair: CgoPair, settings: ProbeSettings, patch, shaper: ProbeShaper | None = None):
    """Gamma data ``(f1, f2)`` and fit residuals for both halves of the pair."""
    out, res = [], []
    for xi, eta in pair.halves():
        check_overflow(xi, patch.grid.diameter, settings.guard)
        if settings.kind == "trace":
            out.append(cgo_trace(xi, eta, patch, settings.guard))
            res.append(np.nan)
        else:
            if shaper is None:
                raise ValueError("projected probes need a ProbeShaper")
            f, r = shaper.project(xi, eta)
            out.append(f)
            res.append(r)
    return out[0], out[1], res


# ---------------------------------------------------------------------------
# Lambda


def _check_pair(Zn: ImpedanceOperator, Zr: ImpedanceOperator):
    if Zn.size != Zr.size or not np.array_equal(Zn.patch.dofs, Zr.patch.dofs):
        raise DimensionMismatch("impedance operators live on different patches")
    if Zn.k != Zr.k:
        raise DimensionMismatch(f"impedance operators use different k ({Zn.k} vs {Zr.k})")


def boundary_pairing(Zn: ImpedanceOperator, Zr: ImpedanceOperator, f1: TangentialField, f2: TangentialField) -> complex:
    """``k^-2 int_Gamma f1 . (Z_n - Z_ref) f2 ds``."""
    _check_pair(Zn, Zr)
    dZ = Zn.matrix - Zr.matrix
    return complex(np.sum(Zn.patch.area * f1.values * (dZ @ f2.values)) / Zn.k**2)


def lambda_linearized(
    Zn: ImpedanceOperator,
    Zr: ImpedanceOperator,
    pair: CgoPair,
    settings: ProbeSettings = ProbeSettings(kind="trace"),
    shaper: ProbeShaper | None = None,
) -> complex:
    """Fourier-sample estimate ``Lambda(l)`` from leading-order probing data."""
    _check_pair(Zn, Zr)
    f1, f2, _ = probe_data(pair, settings, Zn.patch, shaper)
    return boundary_pairing(Zn, Zr, f1, f2)


def _boundary_rhs(xi, eta, patch, literal: bool) -> np.ndarray:
    pts = patch.positions
    d = patch.direction
    ex = np.exp(pts @ np.asarray(xi))
    if literal:
        return ex * np.asarray(eta)[d]
    # nu x curl V + N_xi(nu x V) for V = exp(x.xi) eta equals (nu.eta) xi_t exp(x.xi)
    nu_eta = patch.normal @ np.asarray(eta)
    return ex * nu_eta * np.asarray(xi)[d]


def tikhonov_solve(A: np.ndarray, b: np.ndarray, reg: float) -> tuple[np.ndarray, float]:
    """``argmin ||A x - b||^2 + reg^2 ||x||^2`` via the SVD; returns ``(x, rel. residual)``."""
    U, sv, Vh = np.linalg.svd(A)
    filt = sv / (sv**2 + reg**2)
    x = Vh.conj().T @ (filt * (U.conj().T @ b))
    res = float(np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), 1e-300))
    return x, res


def lambda_full(
    Zn: ImpedanceOperator,
    Zr: ImpedanceOperator,
    pair: CgoPair,
    reg: float | None = None,
    rhs: str = "consistent",
    guard: float = 60.0,
    max_residual: float = ILL_CONDITIONED_RESIDUAL,
) -> complex:
    """Fourier sample from the regularised boundary equation.

    Solves ``(Z_n + N_xi1) h1 = b1`` and ``(Z_ref + N_xi2) h2 = b2`` in the
    Tikhonov sense and returns ``k^-2 int h1 . (Z_n - Z_ref) h2``.
    ``rhs='consistent'`` uses ``(nu . eta) xi_t exp(x . xi)``, the value the
    left side takes on an exact plane-wave-type solution; ``'literal'``
    uses ``eta exp(x . xi)``.  ``reg`` defaults to ``1e-6 ||Z + N_xi||_2``.
    """
    _check_pair(Zn, Zr)
    if reg is not None and not reg > 0:
        raise ValueError("reg must be positive")
    patch = Zn.patch
    hs = []
    for Z, (xi, eta) in ((Zn, (pair.xi1, pair.eta1)), (Zr, (pair.xi2, pair.eta2))):
        check_overflow(xi, patch.grid.diameter, guard)
        A = Z.matrix + np.diag(patch.normal @ np.asarray(xi))
        b = _boundary_rhs(xi, eta, patch, rhs == "literal")
        r = 1e-6 * np.linalg.norm(A, 2) if reg is None else reg
        h, res = tikhonov_solve(A, b, r)
        if res > max_residual:
            raise IllConditioned(f"regularised boundary solve residual {res:.3g} > {max_residual:g}")
        hs.append(TangentialField(patch, h))
    return boundary_pairing(Zn, Zr, hs[0], hs[1])


# ---------------------------------------------------------------------------
# scan and inversion


@dataclass
class FourierTable:
    """Fourier samples ``Lambda(l)`` over an l-grid."""

    l: np.ndarray
    values: np.ndarray
    s: np.ndarray
    route: str
    ok: np.ndarray
    residual: np.ndarray
    extent: tuple = (1.0, 1.0, 1.0)
    errors: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.values)

    @classmethod
    def empty(cls, route: str = "linearized") -> "FourierTable":
        z = np.zeros(0)
        return cls(np.zeros((0, 3)), z.astype(complex), z, route, z.astype(bool), z)

    def hermitian_defect(self) -> float:
        """``max |Lambda(-l) - conj Lambda(l)| / max |Lambda|`` (diagnostic)."""
        if len(self) == 0:
            return 0.0
        key = {tuple(np.round(v, 9)): i for i, v in enumerate(self.l)}
        scale = max(np.nanmax(np.abs(self.values)), 1e-300)
        worst = 0.0
        for i, v in enumerate(self.l):
            j = key.get(tuple(np.round(-v, 9)))
            if j is not None and self.ok[i] and self.ok[j]:
                worst = max(worst, abs(self.values[j] - np.conj(self.values[i])) / scale)
        return float(worst)

    def select(self, mask) -> "FourierTable":
        return FourierTable(
            self.l[mask], self.values[mask], self.s[mask], self.route, self.ok[mask], self.residual[mask], self.extent
        )


def scan_fourier(
    Zn: ImpedanceOperator,
    Zr: ImpedanceOperator,
    lgrid: LGrid,
    route: str = "linearized",
    settings: ProbeSettings = ProbeSettings(),
    shaper: ProbeShaper | None = None,
    reg: float | None = None,
    rhs: str = "consistent",
) -> FourierTable:
    """Evaluate ``Lambda`` at every l-grid sample; failed samples are flagged."""
    _check_pair(Zn, Zr)
    if route not in ("linearized", "full"):
        raise ValueError(f"unknown route {route!r}")
    grid = Zn.patch.grid
    if route == "linearized" and settings.kind == "projected" and shaper is None:
        shaper = ProbeShaper.build(Zr, region_mask(grid, settings.region, settings.margin), settings.reg)
    L = lgrid.samples
    vals = np.full(len(L), np.nan + 0j)
    svals = np.zeros(len(L))
    ok = np.zeros(len(L), dtype=bool)
    resid = np.full(len(L), np.nan)
    errors: dict = {}
    for i, l in enumerate(L):
        svals[i] = lgrid.s_of(float(np.linalg.norm(l)))
        try:
            pair = make_pair(l, lgrid, settings, svals[i])
            if route == "linearized":
                f1, f2, res = probe_data(pair, settings, Zn.patch, shaper)
                vals[i] = boundary_pairing(Zn, Zr, f1, f2)
                resid[i] = np.nanmax(res) if np.any(np.isfinite(res)) else np.nan
            else:
                vals[i] = lambda_full(Zn, Zr, pair, reg, rhs, settings.guard)
            ok[i] = True
        except (OverflowGuard, DegenerateEta, IllConditioned) as exc:
            errors[i] = exc.code
            logger.debug("sample l=%s failed: %s", l, exc)
    table = FourierTable(L, vals, svals, route, ok, resid, tuple(grid.extent), errors)
    if len(L) and (~ok).sum() > 0.5 * len(L):
        raise ScanFailed(f"{(~ok).sum()} of {len(L)} samples failed: {sorted(set(errors.values()))}")
    return table


def hann_radial(l: np.ndarray, l_max: float) -> np.ndarray:
    r = np.linalg.norm(l, axis=-1) / max(l_max, 1e-300)
    return np.where(r <= 1, 0.5 * (1 + np.cos(np.pi * r)), 0.0)


def synthesis_matrix(points: np.ndarray, l: np.ndarray) -> np.ndarray:
    return np.exp(-1j * (points @ l.T))


@dataclass
class ContrastVolume:
    """Reconstructed ``n - n_ref`` at cell centres, shape ``grid.cells``."""

    grid: BoxGrid
    values: np.ndarray
    window: str = "none"
    meta: dict = field(default_factory=dict)

    @property
    def points(self) -> np.ndarray:
        return self.grid.cell_centers().reshape(-1, 3)

    def forward_transform(self, l: np.ndarray) -> np.ndarray:
        """``int w(x) exp(i l . x) dx`` by the midpoint rule (cell centres)."""
        w = self.values.reshape(-1)
        return self.grid.cell_volume * (np.exp(1j * (np.asarray(l) @ self.points.T)) @ w)

    def peak(self) -> np.ndarray:
        return self.points[int(np.argmax(np.abs(self.values.reshape(-1))))]


def invert_fourier(table: FourierTable, grid: BoxGrid, window: str = "none", l_max: float | None = None) -> ContrastVolume:
    """Windowed Fourier synthesis ``|Omega|^-1 sum_l W(l) Lambda(l) exp(-i l . x)``.

    Failed samples contribute zero.  ``window`` is ``'none'`` or ``'hann'``
    (radial Hann taper reaching zero at ``l_max``, default the largest |l|).
    """
    if window not in ("none", "hann"):
        raise ValueError(f"unknown window {window!r}")
    pts = grid.cell_centers().reshape(-1, 3)
    vol = float(np.prod(grid.extent))
    if len(table) == 0:
        return ContrastVolume(grid, np.zeros(grid.cells, dtype=complex), window, {"samples": 0})
    vals = np.where(table.ok, table.values, 0.0)
    if window == "hann":
        lm = float(np.linalg.norm(table.l, axis=1).max()) if l_max is None else l_max
        # taper reaches zero one lattice step past the last sample
        step = 2 * np.pi / float(np.max(grid.extent))
        vals = vals * hann_radial(table.l, lm + step)
    out = np.zeros(len(pts), dtype=complex)
    chunk = 4096
    for i in range(0, len(pts), chunk):
        out[i : i + chunk] = synthesis_matrix(pts[i : i + chunk], table.l) @ vals / vol
    return ContrastVolume(grid, out.reshape(grid.cells), window, {"samples": int(table.ok.sum())})


def dft_lattice(grid: BoxGrid) -> np.ndarray:
    """Full DFT lattice of the cell-centre grid (``m_a`` in ``[-N_a/2, N_a/2)``)."""
    axes = [np.arange(-(n // 2), n - n // 2) for n in grid.cells]
    M = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    return 2 * np.pi * M / np.asarray(grid.extent, dtype=float)


def analytic_table(func_hat, l: np.ndarray, extent=(1.0, 1.0, 1.0), route: str = "analytic") -> FourierTable:
    """Table from a closed-form transform ``func_hat(l) = int w exp(i l.x) dx``."""
    vals = np.asarray(func_hat(l), dtype=complex)
    n = len(l)
    return FourierTable(l, vals, np.zeros(n), route, np.ones(n, dtype=bool), np.zeros(n), tuple(extent))


def relative_l2(estimate: np.ndarray, truth: np.ndarray) -> float:
    return float(np.linalg.norm(np.ravel(estimate) - np.ravel(truth)) / max(np.linalg.norm(np.ravel(truth)), 1e-300))


@dataclass(frozen=True)
class GaussianBump:
    """``amplitude exp(-|x - center|^2 / (2 sigma^2))``, cut to zero beyond ``cutoff`` sigmas."""

    center: tuple = (0.5, 0.5, 0.5)
    sigma: float = 0.08
    amplitude: complex = 0.05
    cutoff: float = 4.0

    def __call__(self, x) -> np.ndarray:
        r2 = np.sum((np.asarray(x) - np.asarray(self.center)) ** 2, axis=-1)
        return np.where(r2 < (self.cutoff * self.sigma) ** 2, self.amplitude * np.exp(-r2 / (2 * self.sigma**2)), 0.0)

    def transform(self, l) -> np.ndarray:
        """``int w exp(i l . x) dx`` of the untruncated Gaussian."""
        l = np.atleast_2d(l)
        return (
            self.amplitude
            * (2 * np.pi * self.sigma**2) ** 1.5
            * np.exp(-(self.sigma**2) * np.sum(l * l, axis=1) / 2)
            * np.exp(1j * (l @ np.asarray(self.center, dtype=float)))
        )

    def index(self, grid: BoxGrid, background: complex = 1.0):
        from .core import RefractiveIndexField

        return RefractiveIndexField.from_function(grid, lambda p: background + self(p), background)
