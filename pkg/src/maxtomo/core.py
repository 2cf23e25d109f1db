"""Shared domain types: wave parameters, the staggered box grid, boundary
patches, tangential boundary data and the complex refractive index.

Degrees of freedom
------------------
Electric fields live on the edges of a uniform Yee grid covering the box
``[0, Lx] x [0, Ly] x [0, Lz]``.  An x-directed edge sits at
``((i + 1/2) hx, j hy, k hz)`` and stores ``E . e_x`` there; y- and z-edges
are analogous.  Edges lying in the surface of the box are the tangential
boundary degrees of freedom.

For a tangential field ``f`` on a face with normal ``nu`` the component of
``nu x f`` along ``nu x e`` equals ``f . e``.  A :class:`TangentialField`
therefore stores one number per boundary edge and represents ``nu x E``
without ambiguity; :meth:`TangentialField.vectors` recovers the vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionMismatch, GridError, MediumError

EPS0 = 8.8541878128e-12
MU0 = 1.25663706212e-6

FACES = ("x-", "x+", "y-", "y+", "z-", "z+")
AXES = "xyz"


def face_axis(face: str) -> tuple[int, int]:
    """Return ``(axis, side)`` for a face name, side 0 = low, 1 = high."""
    if face not in FACES:
        raise GridError(f"unknown face {face!r}; expected one of {FACES}")
    return AXES.index(face[0]), int(face[1] == "+")


def face_normal(face: str) -> np.ndarray:
    axis, side = face_axis(face)
    nu = np.zeros(3)
    nu[axis] = 1.0 if side else -1.0
    return nu


@dataclass(frozen=True)
class WaveParams:
    """Angular frequency and vacuum constants; ``k = omega sqrt(mu0 eps0)``."""

    omega: float
    eps0: float = EPS0
    mu0: float = MU0
    k: float = field(init=False)

    def __post_init__(self):
        if not (self.omega > 0 and self.eps0 > 0 and self.mu0 > 0):
            raise ValueError("omega, eps0 and mu0 must be positive")
        object.__setattr__(self, "k", self.omega * np.sqrt(self.mu0 * self.eps0))

    @classmethod
    def from_wavenumber(cls, k: float, eps0: float = EPS0, mu0: float = MU0) -> "WaveParams":
        if not k > 0:
            raise ValueError("wave number must be positive")
        return cls(omega=k / np.sqrt(mu0 * eps0), eps0=eps0, mu0=mu0)


@dataclass(frozen=True)
class BoxGrid:
    """Uniform staggered edge grid on an axis-aligned box."""

    extent: tuple[float, float, float] = (1.0, 1.0, 1.0)
    cells: tuple[int, int, int] = (8, 8, 8)

    def __post_init__(self):
        extent = tuple(float(v) for v in np.broadcast_to(self.extent, 3))
        cells = tuple(int(v) for v in np.broadcast_to(self.cells, 3))
        if min(extent) <= 0:
            raise GridError(f"extent must be positive, got {extent}")
        if min(cells) < 4:
            raise GridError(f"need at least 4 cells per axis, got {cells}")
        object.__setattr__(self, "extent", extent)
        object.__setattr__(self, "cells", cells)

    @property
    def spacing(self) -> np.ndarray:
        return np.asarray(self.extent) / np.asarray(self.cells)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.extent))

    def family_shape(self, d: int) -> tuple[int, int, int]:
        """Array shape of the d-directed edge family."""
        return tuple(n if a == d else n + 1 for a, n in enumerate(self.cells))

    def face_shape(self, d: int) -> tuple[int, int, int]:
        """Array shape of the faces with normal along axis d."""
        return tuple(n + 1 if a == d else n for a, n in enumerate(self.cells))

    @cached_property
    def offsets(self) -> np.ndarray:
        sizes = [int(np.prod(self.family_shape(d))) for d in range(3)]
        return np.concatenate([[0], np.cumsum(sizes)])

    @property
    def n_dofs(self) -> int:
        return int(self.offsets[-1])

    def index(self, d, i, j, k):
        """Global DOF index of edge (i, j, k) in family d (vectorised)."""
        d = np.asarray(d)
        out = np.empty(np.broadcast(d, i, j, k).shape, dtype=np.int64)
        d_b, i_b, j_b, k_b = np.broadcast_arrays(d, i, j, k)
        for fam in range(3):
            m = d_b == fam
            if np.any(m):
                shape = self.family_shape(fam)
                out[m] = self.offsets[fam] + np.ravel_multi_index(
                    (i_b[m], j_b[m], k_b[m]), shape
                )
        return out if out.shape else int(out)

    def unravel(self, idx):
        """Inverse of :meth:`index`: returns ``(d, i, j, k)`` arrays."""
        idx = np.asarray(idx, dtype=np.int64)
        if np.any((idx < 0) | (idx >= self.n_dofs)):
            raise GridError("DOF index out of range")
        d = np.searchsorted(self.offsets, idx, side="right") - 1
        ijk = np.empty((3,) + idx.shape, dtype=np.int64)
        for fam in range(3):
            m = d == fam
            if np.any(m):
                loc = np.unravel_index(idx[m] - self.offsets[fam], self.family_shape(fam))
                for a in range(3):
                    ijk[a][m] = loc[a]
        return d, ijk[0], ijk[1], ijk[2]

    @cached_property
    def _edge_table(self):
        d, i, j, k = self.unravel(np.arange(self.n_dofs))
        return d, np.stack([i, j, k], axis=1)

    @property
    def edge_family(self) -> np.ndarray:
        return self._edge_table[0]

    @cached_property
    def edge_midpoints(self) -> np.ndarray:
        d, ijk = self._edge_table
        pos = ijk.astype(float)
        pos[np.arange(len(d)), d] += 0.5
        return pos * self.spacing

    @cached_property
    def edge_on_face(self) -> np.ndarray:
        """Boolean ``(n_dofs, 6)``: edge lies in the closure of each face."""
        d, ijk = self._edge_table
        out = np.zeros((self.n_dofs, 6), dtype=bool)
        for a in range(3):
            transverse = d != a
            out[:, 2 * a] = transverse & (ijk[:, a] == 0)
            out[:, 2 * a + 1] = transverse & (ijk[:, a] == self.cells[a])
        return out

    @cached_property
    def edge_volumes(self) -> np.ndarray:
        """Dual-cell volume attached to every edge (halved at each boundary)."""
        d, ijk = self._edge_table
        h = self.spacing
        vol = np.full(self.n_dofs, self.cell_volume)
        for a in range(3):
            end = (d != a) & ((ijk[:, a] == 0) | (ijk[:, a] == self.cells[a]))
            vol[end] *= 0.5
        return vol

    def face_volumes(self, d: int) -> np.ndarray:
        """Dual volume of the d-normal faces, flattened in C order."""
        w = [np.ones(n + 1 if a == d else n) for a, n in enumerate(self.cells)]
        w[d][[0, -1]] = 0.5
        vol = np.einsum("i,j,k->ijk", *w) * self.cell_volume
        return vol.ravel()

    @cached_property
    def boundary_dofs(self) -> np.ndarray:
        return np.flatnonzero(self.edge_on_face.any(axis=1))

    @cached_property
    def interior_dofs(self) -> np.ndarray:
        return np.flatnonzero(~self.edge_on_face.any(axis=1))

    def nodes(self, axis: int) -> np.ndarray:
        return np.arange(self.cells[axis] + 1) * self.spacing[axis]

    def centers(self, axis: int) -> np.ndarray:
        return (np.arange(self.cells[axis]) + 0.5) * self.spacing[axis]

    def cell_centers(self) -> np.ndarray:
        """Cell centres, shape ``(Nx, Ny, Nz, 3)``."""
        return np.stack(np.meshgrid(*(self.centers(a) for a in range(3)), indexing="ij"), axis=-1)

    def node_points(self) -> np.ndarray:
        """Grid nodes, shape ``(Nx+1, Ny+1, Nz+1, 3)``."""
        return np.stack(np.meshgrid(*(self.nodes(a) for a in range(3)), indexing="ij"), axis=-1)

    def split(self, vec: np.ndarray) -> list[np.ndarray]:
        """Split an edge vector into its three family arrays."""
        vec = np.asarray(vec)
        if vec.shape[0] != self.n_dofs:
            raise DimensionMismatch(f"expected {self.n_dofs} edge values, got {vec.shape[0]}")
        return [
            vec[self.offsets[d] : self.offsets[d + 1]].reshape(self.family_shape(d) + vec.shape[1:])
            for d in range(3)
        ]

    def sample(self, func: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Evaluate a vector field ``func(points) -> (..., 3)`` on the edges."""
        vals = np.asarray(func(self.edge_midpoints))
        return vals[np.arange(self.n_dofs), self.edge_family]

    def sample_scalar(self, func: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        return np.asarray(func(self.edge_midpoints))


def make_box_grid(extent: Sequence[float] = (1.0, 1.0, 1.0), cells: Sequence[int] | int = 8) -> BoxGrid:
    return BoxGrid(tuple(np.broadcast_to(extent, 3)), tuple(np.broadcast_to(cells, 3)))


@dataclass(frozen=True, eq=False)
class BoundaryPatch:
    """Accessible part of the boundary: a union of open box faces.

    An edge belongs to the patch when every face containing it is selected,
    so rim edges shared with an unselected face stay in the inaccessible part.
    ``area`` is the dual surface weight of each DOF used for quadrature.
    """

    grid: BoxGrid
    faces: tuple[str, ...]
    dofs: np.ndarray
    area: np.ndarray
    normal: np.ndarray

    @classmethod
    def from_faces(cls, grid: BoxGrid, faces: Sequence[str] = ("z+",)) -> "BoundaryPatch":
        for f in faces:
            face_axis(f)
        faces = tuple(sorted(set(faces), key=FACES.index))
        if not faces:
            raise GridError("patch needs at least one face")
        sel = np.array([f in faces for f in FACES])
        on = grid.edge_on_face
        member = on.any(axis=1) & ~(on & ~sel).any(axis=1)
        dofs = np.flatnonzero(member)
        d, ijk = grid._edge_table
        d, ijk = d[dofs], ijk[dofs]
        h = grid.spacing
        area = np.zeros(len(dofs))
        normal = np.zeros((len(dofs), 3))
        for fi, name in enumerate(FACES):
            if name not in faces:
                continue
            a, _ = face_axis(name)
            hit = on[dofs, fi]
            # strip width along the third axis c (neither a nor the edge direction)
            c = 3 - a - d[hit]
            w = h[c] * np.where((ijk[hit, c] == 0) | (ijk[hit, c] == np.asarray(grid.cells)[c]), 0.5, 1.0)
            area[hit] += h[d[hit]] * w
            normal[hit] += face_normal(name)
        norms = np.linalg.norm(normal, axis=1, keepdims=True)
        normal = normal / norms
        if len(dofs) == 0:
            raise GridError("patch has no degrees of freedom")
        return cls(grid, faces, dofs, area, normal)

    @classmethod
    def full(cls, grid: BoxGrid) -> "BoundaryPatch":
        return cls.from_faces(grid, FACES)

    @property
    def size(self) -> int:
        return len(self.dofs)

    @property
    def direction(self) -> np.ndarray:
        return self.grid.edge_family[self.dofs]

    @property
    def positions(self) -> np.ndarray:
        return self.grid.edge_midpoints[self.dofs]

    @cached_property
    def single_face(self) -> np.ndarray:
        """True for DOFs lying in exactly one face (not on a box edge)."""
        return self.grid.edge_on_face[self.dofs].sum(axis=1) == 1

    def locate(self, global_dofs: np.ndarray) -> np.ndarray:
        """Positions of global DOF indices inside this patch (-1 if absent)."""
        pos = np.searchsorted(self.dofs, global_dofs)
        pos = np.clip(pos, 0, len(self.dofs) - 1)
        return np.where(self.dofs[pos] == global_dofs, pos, -1)

    def contains(self, other: "BoundaryPatch") -> bool:
        return other.grid == self.grid and bool(np.all(self.locate(other.dofs) >= 0))


@dataclass(frozen=True, eq=False)
class TangentialField:
    """Complex tangential boundary data, one value per patch DOF."""

    patch: BoundaryPatch
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != (self.patch.size,):
            raise DimensionMismatch(
                f"tangential field needs {self.patch.size} values, got shape {vals.shape}"
            )
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, patch: BoundaryPatch) -> "TangentialField":
        return cls(patch, np.zeros(patch.size, dtype=complex))

    @classmethod
    def from_vector_field(cls, patch: BoundaryPatch, func) -> "TangentialField":
        """Tangential trace of a vector field ``func(points) -> (n, 3)``."""
        vals = np.asarray(func(patch.positions))
        return cls(patch, vals[np.arange(patch.size), patch.direction])

    def to_edges(self) -> np.ndarray:
        out = np.zeros(self.patch.grid.n_dofs, dtype=complex)
        out[self.patch.dofs] = self.values
        return out

    def extend(self, patch: BoundaryPatch) -> "TangentialField":
        """Extension by zero to a larger patch (e.g. the whole boundary)."""
        where = patch.locate(self.patch.dofs)
        if np.any(where < 0):
            raise DimensionMismatch("target patch does not contain the source patch")
        vals = np.zeros(patch.size, dtype=complex)
        vals[where] = self.values
        return TangentialField(patch, vals)

    def restrict(self, patch: BoundaryPatch) -> "TangentialField":
        where = self.patch.locate(patch.dofs)
        vals = np.where(where >= 0, self.values[np.maximum(where, 0)], 0.0)
        return TangentialField(patch, vals)

    def vectors(self) -> np.ndarray:
        """Tangential vectors ``f`` (one component per DOF), shape (n, 3)."""
        out = np.zeros((self.patch.size, 3), dtype=complex)
        out[np.arange(self.patch.size), self.patch.direction] = self.values
        return out

    def inner(self, other: "TangentialField") -> complex:
        """Bilinear surface integral ``int f . g ds`` over the patch."""
        if other.patch is not self.patch:
            other = other.restrict(self.patch)
        return complex(np.sum(self.patch.area * self.values * other.values))

    def __add__(self, other: "TangentialField") -> "TangentialField":
        return TangentialField(self.patch, self.values + other.restrict(self.patch).values)

    def __sub__(self, other: "TangentialField") -> "TangentialField":
        return TangentialField(self.patch, self.values - other.restrict(self.patch).values)

    def __mul__(self, scalar) -> "TangentialField":
        return TangentialField(self.patch, self.values * scalar)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class RefractiveIndexField:
    """Complex refractive index sampled at edge midpoints.

    ``support`` is a closed axis-aligned box ``(lo, hi)`` outside of which the
    index equals ``background``; ``None`` means a homogeneous medium.
    """

    grid: BoxGrid
    values: np.ndarray
    background: complex = 1.0
    support: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != (self.grid.n_dofs,):
            raise DimensionMismatch("refractive index needs one value per edge")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "background", complex(self.background))
        if np.any(vals.real <= 0):
            raise MediumError("Re(n) must be positive everywhere")
        if np.any(vals.imag < 0):
            raise MediumError("Im(n) must be non-negative everywhere")
        if self.background.real <= 0 or self.background.imag < 0:
            raise MediumError("background index must have Re > 0 and Im >= 0")
        contrast = vals != self.background
        support = self.support
        if support is None and np.any(contrast):
            pts = self.grid.edge_midpoints[contrast]
            support = (pts.min(axis=0), pts.max(axis=0))
        if support is not None:
            lo, hi = (np.asarray(v, dtype=float) for v in support)
            support = (lo, hi)
            ext = np.asarray(self.grid.extent)
            if np.any(lo <= 0) or np.any(hi >= ext) or np.any(lo > hi):
                raise MediumError(
                    f"contrast support [{lo}, {hi}] must lie strictly inside the box"
                )
            pts = self.grid.edge_midpoints
            inside = np.all((pts >= lo - 1e-12) & (pts <= hi + 1e-12), axis=1)
            if np.any(contrast & ~inside):
                raise MediumError("index differs from background outside the declared support")
        object.__setattr__(self, "support", support)

    @classmethod
    def homogeneous(cls, grid: BoxGrid, n0: complex = 1.0) -> "RefractiveIndexField":
        return cls(grid, np.full(grid.n_dofs, n0, dtype=complex), n0)

    @classmethod
    def from_function(
        cls, grid: BoxGrid, func, background: complex = 1.0, support=None
    ) -> "RefractiveIndexField":
        """Sample ``func(points) -> n`` at edge midpoints."""
        return cls(grid, grid.sample_scalar(func), background, support)

    @property
    def contrast(self) -> np.ndarray:
        return self.values - self.background

    def boundary_margin(self) -> float:
        """Distance from the contrast support to the box surface (inf if none)."""
        if self.support is None:
            return np.inf
        lo, hi = self.support
        return float(min(lo.min(), (np.asarray(self.grid.extent) - hi).min()))


def _as_edge_samples(grid: BoxGrid, data) -> np.ndarray:
    if callable(data):
        return np.asarray(grid.sample_scalar(data), dtype=float)
    arr = np.asarray(data, dtype=float)
    return np.broadcast_to(arr, (grid.n_dofs,)).copy()


def refractive_index(
    eps_field, sigma_field, wp: WaveParams, grid: BoxGrid, support=None
) -> RefractiveIndexField:
    """Build ``n = eps/eps0 + i sigma/(omega eps0)`` from edge samples.

    ``eps_field`` and ``sigma_field`` are arrays with one value per edge,
    scalars, or callables of the edge midpoints.  Outside the support the
    medium must be vacuum (eps = eps0, sigma = 0), so the background is 1.
    """
    eps = _as_edge_samples(grid, eps_field)
    sigma = _as_edge_samples(grid, sigma_field)
    if np.any(eps <= 0):
        raise MediumError("permittivity must be positive")
    if np.any(sigma < 0):
        raise MediumError("conductivity must be non-negative")
    n = eps / wp.eps0 + 1j * sigma / (wp.omega * wp.eps0)
    return RefractiveIndexField(grid, n, 1.0, support)
