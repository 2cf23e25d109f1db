"""Local impedance map ``Z_n : nu x E|_Gamma -> nu x curl E|_Gamma`` and the
integral identity relating two media.

``Z`` is materialised column by column: each Gamma basis field (one edge DOF
set to 1, everything else 0) is solved for and its variational trace read
off.  With surface weights ``W = diag(area)`` the product ``W Z`` is the
negated Schur complement of the curl-curl operator, hence exactly symmetric.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import BoundaryPatch, BoxGrid, RefractiveIndexField, TangentialField, WaveParams
from .errors import DimensionMismatch, SupportViolation
from .forward import CurlCurlSystem, assemble, solve_bvp, solve_dirichlet, variational_trace

logger = logging.getLogger(__name__)

BLOCK = 256


@dataclass(frozen=True, eq=False)
class ImpedanceOperator:
    """Dense matrix of ``Z_n`` on the patch DOFs.

    ``fields`` optionally keeps the interior solutions (n_dofs x patch.size),
    which the reconstruction uses to shape probing data.
    """

    patch: BoundaryPatch
    matrix: np.ndarray
    k: float
    n: RefractiveIndexField
    cond_estimate: float | None = None
    fields: np.ndarray | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.patch.size

    def weighted(self) -> np.ndarray:
        """``diag(area) Z``: the symmetric bilinear form on patch data."""
        return self.patch.area[:, None] * self.matrix

    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))


def basis_data(sys_: CurlCurlSystem, patch: BoundaryPatch, cols: np.ndarray) -> np.ndarray:
    """Boundary-value columns for the Gamma basis fields ``cols``."""
    EB = np.zeros((len(sys_.boundary), len(cols)), dtype=complex)
    pos = np.searchsorted(sys_.boundary, patch.dofs[cols])
    EB[pos, np.arange(len(cols))] = 1.0
    return EB


def assemble_impedance(
    n: RefractiveIndexField,
    grid: BoxGrid,
    patch: BoundaryPatch,
    wp: WaveParams,
    keep_fields: bool = False,
    system: CurlCurlSystem | None = None,
) -> ImpedanceOperator:
    """Build ``Z_n`` from one solve per patch DOF against a shared factorization."""
    if patch.grid != grid or n.grid != grid:
        raise DimensionMismatch("medium, patch and grid disagree")
    sys_ = system if system is not None else assemble(grid, n, wp)
    sys_.factorize()
    m = patch.size
    Z = np.empty((m, m), dtype=complex)
    fields = np.empty((grid.n_dofs, m), dtype=complex) if keep_fields else None
    for start in range(0, m, BLOCK):
        cols = np.arange(start, min(start + BLOCK, m))
        E, _ = solve_dirichlet(sys_, basis_data(sys_, patch, cols))
        Z[:, cols] = variational_trace(sys_, E, patch)
        if keep_fields:
            fields[:, cols] = E
    logger.info("impedance map: %d columns, cond estimate %.3g", m, sys_.cond_estimate or np.nan)
    return ImpedanceOperator(patch, Z, wp.k, n, sys_.cond_estimate, fields)


def apply_impedance(Z: ImpedanceOperator, f: TangentialField) -> TangentialField:
    if f.patch.size != Z.size or (f.patch is not Z.patch and not np.array_equal(f.patch.dofs, Z.patch.dofs)):
        raise DimensionMismatch(f"data has {f.patch.size} DOFs, operator expects {Z.size}")
    return TangentialField(Z.patch, Z.matrix @ f.values)


# ---------------------------------------------------------------------------
# integral identity


@dataclass(frozen=True)
class IdentityReport:
    volume_side: complex
    boundary_side: complex
    mismatch: float
    field_scale: float
    details: dict = field(default_factory=dict)


def cell_average(grid: BoxGrid, E: np.ndarray) -> np.ndarray:
    """Edge values averaged to cell centres, shape (nx, ny, nz, 3)."""
    out = np.zeros(tuple(grid.cells) + (3,), dtype=np.result_type(E, float))
    for d, arr in enumerate(grid.split(E)):
        a, b = [ax for ax in range(3) if ax != d]
        acc = 0
        for oa in (0, 1):
            for ob in (0, 1):
                idx = [slice(None)] * 3
                idx[a] = slice(oa, oa + grid.cells[a])
                idx[b] = slice(ob, ob + grid.cells[b])
                acc = acc + arr[tuple(idx)]
        out[..., d] = acc / 4
    return out


def volume_integral(grid: BoxGrid, E1: np.ndarray, w: np.ndarray, E2: np.ndarray, rule: str = "cell") -> complex:
    """``int E1 . w E2 dx`` for edge arrays.

    ``rule='edge'`` uses dual-cell weights on edges (the quadrature built into
    the operator); ``rule='cell'`` averages everything to cell centres and
    applies the midpoint rule, an independent second-order evaluation.
    """
    if rule == "edge":
        return complex(np.sum(grid.edge_volumes * E1 * w * E2))
    if rule != "cell":
        raise ValueError(f"unknown rule {rule!r}")
    e1, e2 = cell_average(grid, E1), cell_average(grid, E2)
    wc = cell_average(grid, w).mean(axis=-1)
    return complex(grid.cell_volume * np.sum(wc * np.sum(e1 * e2, axis=-1)))


def boundary_neighborhood(grid: BoxGrid, layers: int = 1) -> np.ndarray:
    """Edges within ``layers`` cells of the box surface."""
    pts = grid.edge_midpoints
    h = np.asarray(grid.spacing)
    ext = np.asarray(grid.extent)
    dist = np.minimum(pts, ext - pts) / h
    return np.any(dist < layers + 1e-9, axis=1)


def alessandrini_residual(
    n1: RefractiveIndexField,
    n2: RefractiveIndexField,
    f1: TangentialField,
    f2: TangentialField,
    grid: BoxGrid,
    patch: BoundaryPatch,
    wp: WaveParams,
    rule: str = "cell",
    floor: float = 1e-300,
) -> IdentityReport:
    """Compare both sides of the two-medium integral identity.

    volume side   : ``int E1 (n1 - n2) E2 dx``
    boundary side : ``k^-2 int_Gamma [(nu x curl E1) . E2 - E1 . (nu x curl E2)] ds``

    ``E_j`` solves the problem for ``n_j`` with data ``f_j`` (extended by zero).
    """
    w = n1.values - n2.values
    if np.any(w[boundary_neighborhood(grid)] != 0):
        raise SupportViolation("n1 - n2 is nonzero within one cell of the boundary")
    sols = []
    for n, f in ((n1, f1), (n2, f2)):
        sys_ = assemble(grid, n, wp)
        sols.append(solve_bvp(sys_, f))
    E1, E2 = sols[0].E, sols[1].E
    t1 = variational_trace(sols[0].system, E1, patch)
    t2 = variational_trace(sols[1].system, E2, patch)
    e1, e2 = E1[patch.dofs], E2[patch.dofs]
    bnd = complex(np.sum(patch.area * (t1 * e2 - e1 * t2)) / wp.k**2)
    vol = volume_integral(grid, E1, w, E2, rule)
    vol_edge = volume_integral(grid, E1, w, E2, "edge")
    scale = float(
        np.sqrt(np.sum(grid.edge_volumes * np.abs(E1) ** 2) * np.sum(grid.edge_volumes * np.abs(E2) ** 2))
    )
    denom = max(abs(vol), abs(bnd), floor)
    mismatch = abs(vol - bnd) / denom if (vol != 0 or bnd != 0) else 0.0
    return IdentityReport(vol, bnd, float(mismatch), scale, {"volume_edge_rule": vol_edge, "rule": rule})


def random_patch_data(patch: BoundaryPatch, seed: int, modes: int = 4) -> TangentialField:
    """Smooth random tangential data: sine modes vanishing on the face rims.

    Coefficients depend only on ``seed``, so the same continuum field is
    sampled on every grid.
    """
    rng = np.random.default_rng(seed)
    coef = rng.standard_normal((6, 3, modes, modes)) + 1j * rng.standard_normal((6, 3, modes, modes))
    ext = np.asarray(patch.grid.extent, dtype=float)
    pts = patch.positions / ext
    d = patch.direction
    vals = np.zeros(patch.size, dtype=complex)
    on = patch.grid.edge_on_face[patch.dofs]
    for fi in range(6):
        sel = on[:, fi]
        if not np.any(sel):
            continue
        a = fi // 2
        b, c = [ax for ax in range(3) if ax != a]
        u, v = pts[sel, b], pts[sel, c]
        C = coef[fi][d[sel]]
        acc = np.zeros(sel.sum(), dtype=complex)
        for p in range(modes):
            for q in range(modes):
                acc += C[:, p, q] * np.sin(np.pi * (p + 1) * u) * np.sin(np.pi * (q + 1) * v)
        vals[sel] += acc
    return TangentialField(patch, vals)
