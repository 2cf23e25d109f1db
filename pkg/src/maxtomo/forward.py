"""Time-harmonic curl-curl solver on the staggered box grid.

Solves ``curl curl E - k^2 n E = 0`` in the box with prescribed tangential
boundary values.  The operator is assembled from the discrete energy

    a(E, F) = sum_faces |f| curl_h E . curl_h F  -  k^2 sum_edges |e| n E F

with dual-cell weights ``|f|``, ``|e|`` halved on the box surface.  Interior
rows of its matrix are the usual second-order Yee stencil; boundary rows give
the variational tangential trace of ``nu x curl E`` used by the impedance map.
The same module hosts the free-space Helmholtz kernel, the dyadic Green
matrix and a Stratton-Chu reproduction check.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import FACES, BoundaryPatch, BoxGrid, RefractiveIndexField, TangentialField, WaveParams, face_axis
from .errors import DimensionMismatch, NearResonance, QuadratureBreakdown

logger = logging.getLogger(__name__)

RESONANCE_COND = 1e12
SOLVER_TOL = 1e-10


def _diff(n: int, h: float) -> sp.csr_matrix:
    """Forward difference from n+1 nodes to n midpoints."""
    return sp.diags([-np.ones(n), np.ones(n)], [0, 1], shape=(n, n + 1), format="csr") / h


def _kron3(a, b, c):
    return sp.kron(a, sp.kron(b, c, format="csr"), format="csr")


def curl_matrix(grid: BoxGrid) -> sp.csr_matrix:
    """Discrete curl from edges to faces (x-faces, then y-, then z-faces)."""
    nx, ny, nz = grid.cells
    hx, hy, hz = grid.spacing
    I = lambda n: sp.identity(n, format="csr")  # noqa: E731
    Dx, Dy, Dz = _diff(nx, hx), _diff(ny, hy), _diff(nz, hz)
    # x-faces (nx+1, ny, nz): dy Ez - dz Ey
    cx_ey = -_kron3(I(nx + 1), I(ny), Dz)
    cx_ez = _kron3(I(nx + 1), Dy, I(nz))
    # y-faces (nx, ny+1, nz): dz Ex - dx Ez
    cy_ex = _kron3(I(nx), I(ny + 1), Dz)
    cy_ez = -_kron3(Dx, I(ny + 1), I(nz))
    # z-faces (nx, ny, nz+1): dx Ey - dy Ex
    cz_ex = -_kron3(I(nx), Dy, I(nz + 1))
    cz_ey = _kron3(Dx, I(ny), I(nz + 1))
    Z = lambda a, b: sp.csr_matrix((a.shape[0], b))  # noqa: E731
    sx, sy, sz = (int(np.prod(grid.family_shape(d))) for d in range(3))
    return sp.bmat(
        [
            [Z(cx_ey, sx), cx_ey, cx_ez],
            [cy_ex, Z(cy_ex, sy), cy_ez],
            [cz_ex, cz_ey, Z(cz_ex, sz)],
        ],
        format="csr",
    )


def grad_matrix(grid: BoxGrid) -> sp.csr_matrix:
    """Discrete gradient from nodes to edges."""
    nx, ny, nz = grid.cells
    hx, hy, hz = grid.spacing
    I = lambda n: sp.identity(n, format="csr")  # noqa: E731
    return sp.vstack(
        [
            _kron3(_diff(nx, hx), I(ny + 1), I(nz + 1)),
            _kron3(I(nx + 1), _diff(ny, hy), I(nz + 1)),
            _kron3(I(nx + 1), I(ny + 1), _diff(nz, hz)),
        ],
        format="csr",
    )


def split_faces(grid: BoxGrid, vec: np.ndarray) -> list[np.ndarray]:
    sizes = [int(np.prod(grid.face_shape(d))) for d in range(3)]
    offs = np.concatenate([[0], np.cumsum(sizes)])
    return [vec[offs[d] : offs[d + 1]].reshape(grid.face_shape(d)) for d in range(3)]


@dataclass(eq=False)
class CurlCurlSystem:
    """Assembled operator, scaled by the cell volume.

    ``K`` acts on all edge DOFs; rows of interior edges are the Yee stencil
    of ``curl curl - k^2 n``.  Boundary (tangential) DOFs are Dirichlet data
    and are eliminated through ``K_IB``.
    """

    grid: BoxGrid
    n: RefractiveIndexField
    wp: WaveParams
    K: sp.csr_matrix
    interior: np.ndarray
    boundary: np.ndarray
    K_II: sp.csc_matrix
    K_IB: sp.csr_matrix
    _lu: object = field(default=None, repr=False)
    _perm: np.ndarray | None = field(default=None, repr=False)
    cond_estimate: float | None = None

    @property
    def k(self) -> float:
        return self.wp.k

    def factorize(self, check_resonance: bool = True):
        """Sparse LU of the interior block, reused across right-hand sides.

        The unknowns are reordered by geometric nested dissection; SuperLU
        then keeps that ordering and pivots on the diagonal.
        """
        if self._lu is None:
            perm = nested_dissection(self.grid.edge_midpoints[self.interior])
            A = self.K_II[perm][:, perm].tocsc()
            lu = None
            for thresh in (0.0, 0.1, 1.0):
                try:
                    lu = spla.splu(
                        A, permc_spec="NATURAL", diag_pivot_thresh=thresh, options={"SymmetricMode": thresh < 1.0}
                    )
                except RuntimeError as exc:  # exactly singular pivot
                    logger.debug("splu failed with pivot threshold %g: %s", thresh, exc)
                    continue
                if np.all(np.isfinite(lu.U.data)):
                    break
                lu = None
            if lu is None:
                raise NearResonance(f"factorization failed at k={self.k}")
            self._lu = _PermutedLU(lu, perm)
            if check_resonance:
                self.cond_estimate = estimate_condition(self.K_II, self._lu)
                if not np.isfinite(self.cond_estimate) or self.cond_estimate > RESONANCE_COND:
                    raise NearResonance(
                        f"condition estimate {self.cond_estimate:.3e} exceeds "
                        f"{RESONANCE_COND:.0e} at k={self.k}"
                    )
        return self._lu


class _PermutedLU:
    """LU factors of ``A[p][:, p]`` presented as a solver for ``A``."""

    def __init__(self, lu, perm: np.ndarray):
        self.lu = lu
        self.perm = perm

    @property
    def nnz(self) -> int:
        return self.lu.L.nnz + self.lu.U.nnz

    def solve(self, b: np.ndarray, trans: str = "N") -> np.ndarray:
        b = np.asarray(b)
        x = np.empty(b.shape, dtype=complex)
        x[self.perm] = self.lu.solve(np.ascontiguousarray(b[self.perm], dtype=complex), trans=trans)
        return x


def nested_dissection(points: np.ndarray, leaf: int = 64) -> np.ndarray:
    """Fill-reducing order for staggered-grid unknowns from their positions.

    Each level cuts the longest axis at the node plane nearest the median.
    Edges lying in that plane separate the two halves of the stencil graph
    and are numbered last.
    """
    points = np.asarray(points, dtype=float)
    # snap to a lattice so plane membership is exact
    pts = np.round(points / max(np.ptp(points, axis=0).max(), 1.0) * 2**20).astype(np.int64)
    out: list[np.ndarray] = []
    stack: list[tuple[np.ndarray, bool]] = [(np.arange(len(pts)), False)]
    while stack:
        idx, emit = stack.pop()
        if emit or len(idx) <= leaf:
            out.append(idx)
            continue
        P = pts[idx]
        axis = int(np.argmax(P.max(axis=0) - P.min(axis=0)))
        c = P[:, axis]
        vals, counts = np.unique(c, return_counts=True)
        near = np.argsort(np.abs(vals - np.median(c)), kind="stable")[:3]
        v = vals[near[np.argmax(counts[near])]]
        left, right, sep = idx[c < v], idx[c > v], idx[c == v]
        if len(left) == 0 or len(right) == 0:
            out.append(idx)
            continue
        # processed in stack order: left, right, then separator
        stack.extend([(sep, True), (right, False), (left, False)])
    return np.concatenate(out)


def estimate_condition(A: sp.spmatrix, lu) -> float:
    """1-norm condition estimate using the LU factors for the inverse."""
    n = A.shape[0]
    inv = spla.LinearOperator(
        (n, n),
        matvec=lambda x: lu.solve(np.asarray(x, dtype=complex).ravel()),
        rmatvec=lambda x: lu.solve(np.asarray(x, dtype=complex).ravel(), trans="H"),
        dtype=complex,
    )
    # onenormest draws from the global numpy RNG; pin it for reproducible reports
    state = np.random.get_state()
    try:
        np.random.seed(0)
        with np.errstate(all="ignore"):
            inv_norm = spla.onenormest(inv)
    finally:
        np.random.set_state(state)
    return float(spla.norm(A, 1) * inv_norm)


def assemble(grid: BoxGrid, n: RefractiveIndexField, wp: WaveParams) -> CurlCurlSystem:
    """Assemble ``curl curl - k^2 n`` on the staggered grid."""
    if n.grid != grid:
        raise DimensionMismatch("refractive index lives on a different grid")
    C = curl_matrix(grid)
    wf = np.concatenate([grid.face_volumes(d) for d in range(3)]) / grid.cell_volume
    we = grid.edge_volumes / grid.cell_volume
    K = (C.T @ sp.diags(wf) @ C).astype(complex) - sp.diags(wp.k**2 * we * n.values)
    K = K.tocsr()
    K.sort_indices()
    interior, boundary = grid.interior_dofs, grid.boundary_dofs
    K_II = K[interior][:, interior].tocsc()
    K_IB = K[interior][:, boundary].tocsr()
    return CurlCurlSystem(grid, n, wp, K, interior, boundary, K_II, K_IB)


@dataclass(eq=False)
class FieldSolution:
    system: CurlCurlSystem
    E: np.ndarray
    residual_norm: float
    info: dict = field(default_factory=dict)

    @property
    def grid(self) -> BoxGrid:
        return self.system.grid


def _boundary_values(sys_: CurlCurlSystem, f: TangentialField) -> np.ndarray:
    if f.patch.grid != sys_.grid:
        raise DimensionMismatch("boundary data lives on a different grid")
    return f.to_edges()[sys_.boundary]


def solve_dirichlet(sys_: CurlCurlSystem, EB: np.ndarray, tol: float = SOLVER_TOL):
    """Solve for interior values given boundary columns ``EB`` (nB x m).

    Returns full edge arrays (n_dofs x m) and relative residuals.
    """
    lu = sys_.factorize()
    EB = np.asarray(EB, dtype=complex)
    one = EB.ndim == 1
    EB2 = EB[:, None] if one else EB
    rhs = -(sys_.K_IB @ EB2)
    EI = lu.solve(rhs) if rhs.shape[1] > 1 else lu.solve(rhs[:, 0])[:, None]
    res = np.linalg.norm(sys_.K_II @ EI - rhs, axis=0)
    scale = np.maximum(np.linalg.norm(rhs, axis=0), 1e-300)
    rel = np.where(np.linalg.norm(rhs, axis=0) > 0, res / scale, res)
    if np.any(rel > tol):
        # one step of iterative refinement
        EI = EI + (lu.solve(rhs - sys_.K_II @ EI) if EI.shape[1] > 1 else lu.solve((rhs - sys_.K_II @ EI)[:, 0])[:, None])
        res = np.linalg.norm(sys_.K_II @ EI - rhs, axis=0)
        rel = np.where(np.linalg.norm(rhs, axis=0) > 0, res / scale, res)
    E = np.zeros((sys_.grid.n_dofs, EB2.shape[1]), dtype=complex)
    E[sys_.interior] = EI
    E[sys_.boundary] = EB2
    if np.any(rel > tol):
        raise NearResonance(f"relative residual {rel.max():.2e} above tolerance {tol:.0e}")
    return (E[:, 0], float(rel[0])) if one else (E, rel)


def solve_bvp(sys_: CurlCurlSystem, f: TangentialField, tol: float = SOLVER_TOL) -> FieldSolution:
    """Solve ``curl curl E - k^2 n E = 0`` with ``nu x E = f`` on the boundary.

    Data given on part of the boundary is extended by zero.
    """
    E, rel = solve_dirichlet(sys_, _boundary_values(sys_, f), tol)
    return FieldSolution(sys_, E, rel, {"method": "splu", "cond_estimate": sys_.cond_estimate})


def variational_trace(sys_: CurlCurlSystem, E: np.ndarray, patch: BoundaryPatch) -> np.ndarray:
    """``(nu x curl E) . e`` at patch DOFs from the boundary rows of the operator.

    With ``a(E, F) = -int_{boundary} (nu x curl E) . F ds`` for solutions, the
    trace is the boundary-row residual divided by the DOF's surface weight.
    Second-order accurate, and it makes the discrete Green identity exact.
    """
    rows = sys_.K[patch.dofs] @ E
    scale = sys_.grid.cell_volume / patch.area
    return -(rows.T * scale).T


def boundary_traces(sol: FieldSolution, patch: BoundaryPatch) -> tuple[TangentialField, TangentialField]:
    """Return ``(nu x E, nu x curl E)`` on the patch."""
    if patch.grid != sol.grid:
        raise DimensionMismatch("patch lives on a different grid")
    e = TangentialField(patch, sol.E[patch.dofs])
    t = TangentialField(patch, variational_trace(sol.system, sol.E, patch))
    return e, t


# ---------------------------------------------------------------------------
# closed-form fields


def plane_wave(k: complex, direction, polarization):
    """``eta exp(i k d . x)`` as a callable of points; requires d . eta = 0."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    eta = np.asarray(polarization, dtype=complex)

    def field_(x):
        return np.exp(1j * k * (np.asarray(x) @ d))[..., None] * eta

    return field_


def plane_wave_curl(k: complex, direction, polarization):
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    eta = np.asarray(polarization, dtype=complex)
    c = 1j * k * np.cross(d, eta)

    def field_(x):
        return np.exp(1j * k * (np.asarray(x) @ d))[..., None] * c

    return field_


def discrete_l2(grid: BoxGrid, vec: np.ndarray) -> float:
    """Discrete L2 norm with dual-cell weights."""
    return float(np.sqrt(np.sum(grid.edge_volumes * np.abs(vec) ** 2)))


# ---------------------------------------------------------------------------
# free-space kernels


def _offsets(x, y):
    r = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    dist = np.linalg.norm(r, axis=-1)
    if np.any(dist == 0):
        raise ValueError("coincident points: kernel is singular at x = y")
    return r, dist


def helmholtz_phi(x, y, k: complex):
    """Outgoing fundamental solution ``exp(ik|x-y|) / (4 pi |x-y|)``."""
    _, dist = _offsets(x, y)
    return np.exp(1j * k * dist) / (4 * np.pi * dist)


def grad_phi(x, y, k: complex):
    """Gradient of the Helmholtz kernel with respect to x."""
    r, dist = _offsets(x, y)
    phi = np.exp(1j * k * dist) / (4 * np.pi * dist)
    return (phi * (1j * k - 1 / dist) / dist)[..., None] * r


def dyadic_green(x, y, k: complex):
    """``G = Phi I + grad_x grad_x Phi / k^2`` as ``(..., 3, 3)`` complex."""
    if k == 0:
        raise ValueError("dyadic Green matrix undefined for k = 0")
    r, dist = _offsets(x, y)
    rh = r / dist[..., None]
    phi = np.asarray(np.exp(1j * k * dist) / (4 * np.pi * dist))
    kr = k * dist
    a = np.asarray(1 + (1j * kr - 1) / kr**2)
    b = np.asarray((3 - 3j * kr - kr**2) / kr**2)
    eye = np.eye(3)
    return phi[..., None, None] * (a[..., None, None] * eye + b[..., None, None] * rh[..., :, None] * rh[..., None, :])


# ---------------------------------------------------------------------------
# Stratton-Chu reproduction


def _face_traces(sol: FieldSolution, face: str):
    """Midpoint samples of nu x E and nu x curl E on the cells of one face."""
    grid = sol.grid
    a, side = face_axis(face)
    b, c = [ax for ax in range(3) if ax != a]
    N = grid.cells
    Efam = grid.split(sol.E)
    curl = split_faces(grid, curl_matrix(grid) @ sol.E)
    plane = N[a] if side else 0

    def take(arr, axis, idx):
        return np.take(arr, idx, axis=axis)

    Et = np.zeros((N[b], N[c], 3), dtype=complex)
    Ct = np.zeros((N[b], N[c], 3), dtype=complex)
    for t, other in ((b, c), (c, b)):
        # tangential E component t: nodes along a and `other`, centres along t
        arr = take(Efam[t], a, plane)  # remaining axes in increasing order
        ax_other = 0 if other < t else 1
        arr = 0.5 * (take(arr, ax_other, np.arange(N[other])) + take(arr, ax_other, np.arange(1, N[other] + 1)))
        Et[..., t] = arr
        # tangential curl component t lives on t-normal faces: node along t,
        # centres along the other two; extrapolate along a to the surface
        carr = curl[t]
        i1, i2 = (N[a] - 1, N[a] - 2) if side else (0, 1)
        cs = 1.5 * take(carr, a, i1) - 0.5 * take(carr, a, i2)
        ax_t = 0 if t < other else 1
        cs = 0.5 * (take(cs, ax_t, np.arange(N[t])) + take(cs, ax_t, np.arange(1, N[t] + 1)))
        Ct[..., t] = cs
    h = grid.spacing
    pb, pc = np.meshgrid(grid.centers(b), grid.centers(c), indexing="ij")
    pts = np.zeros((N[b], N[c], 3))
    pts[..., a] = grid.extent[a] if side else 0.0
    pts[..., b], pts[..., c] = pb, pc
    nu = np.zeros(3)
    nu[a] = 1.0 if side else -1.0
    nxE = np.cross(nu, Et)
    nxC = np.cross(nu, Ct)
    w = h[b] * h[c]
    return pts.reshape(-1, 3), nxE.reshape(-1, 3), nxC.reshape(-1, 3), w


def stratton_chu(points, weights, nxE, nxcurlE, x, k: complex) -> np.ndarray:
    """Interior representation ``E(x)`` from tangential traces on a closed surface.

    ``E(x) = -int grad Phi x (nu x E) ds - int G(x, y) (nu x curl E) ds``.
    """
    x = np.asarray(x, dtype=float)
    gphi = grad_phi(x[None, :], points, k)
    G = dyadic_green(x[None, :], points, k)
    term1 = np.cross(gphi, nxE)
    term2 = np.einsum("nij,nj->ni", G, nxcurlE)
    w = np.broadcast_to(weights, (len(points),))
    return -np.sum(w[:, None] * (term1 + term2), axis=0)


def stratton_chu_check(sol: FieldSolution, x, clearance_cells: float = 4.0) -> np.ndarray:
    """Reproduce ``E(x)`` from the boundary traces of a homogeneous solution.

    The medium must equal its background between x and the boundary; the
    wave number used is ``k sqrt(n0)``.
    """
    grid = sol.grid
    x = np.asarray(x, dtype=float)
    clearance = min(x.min(), (np.asarray(grid.extent) - x).min())
    if clearance < clearance_cells * grid.spacing.max():
        raise QuadratureBreakdown(
            f"point {x} is {clearance:.3g} from the boundary; need {clearance_cells} cells"
        )
    kappa = sol.system.k * np.sqrt(sol.system.n.background)
    pts, ws, exs, cxs = [], [], [], []
    for face in FACES:
        p, nxE, nxC, w = _face_traces(sol, face)
        pts.append(p)
        exs.append(nxE)
        cxs.append(nxC)
        ws.append(np.full(len(p), w))
    return stratton_chu(np.concatenate(pts), np.concatenate(ws), np.concatenate(exs), np.concatenate(cxs), x, kappa)


def interpolate_to_point(grid: BoxGrid, E: np.ndarray, x) -> np.ndarray:
    """Trilinear interpolation of each edge family to a point."""
    from scipy.interpolate import RegularGridInterpolator

    out = np.zeros(3, dtype=complex)
    for d, arr in enumerate(grid.split(E)):
        axes = [grid.centers(a) if a == d else grid.nodes(a) for a in range(3)]
        out[d] = RegularGridInterpolator(axes, arr)(np.asarray(x)[None, :])[0]
    return out
