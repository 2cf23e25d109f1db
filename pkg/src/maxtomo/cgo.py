"""Complex geometrical optics (CGO) probing fields.

A pair of wave vectors

    xi_1 =  (s + g) w1 + i (l/2 + s w2)
    xi_2 = -(s + g) w1 + i (l/2 - s w2)

with ``w1, w2, l`` mutually orthogonal satisfies ``xi_1 + xi_2 = i l`` and
``xi_j . xi_j = c`` (bilinear dot product) once ``(s + g)^2 = s^2 + |l|^2/4 + c``.
The default ``c = k^2`` is the classical normalisation.  A field
``exp(x . xi) eta`` with ``xi . eta = 0`` solves ``curl curl V - k^2 n0 V = 0``
exactly when ``c = -k^2 n0``; the reconstruction pipelines pass that value
through ``xi_sq``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import BoundaryPatch, TangentialField
from .errors import DegenerateEta, OverflowGuard

OVERFLOW_GUARD = 60.0
DEGENERATE_ETA = 1e-8
FRAME_TOL = 1e-12


def bdot(a, b):
    """Bilinear (non-conjugated) dot product over the last axis."""
    return np.sum(np.asarray(a) * np.asarray(b), axis=-1)


def g_of_s(s: float, l, k: float, xi_sq: complex | None = None) -> float:
    """Positive shift ``g`` with ``(s + g)^2 = s^2 + |l|^2/4 + xi_sq``.

    ``xi_sq`` defaults to ``k^2``.  Evaluated in the cancellation-free form
    ``(|l|^2/4 + xi_sq) / (sqrt(...) + s)``.  For negative ``xi_sq`` the
    radicand is clamped at zero within rounding, giving ``g = -s`` (a purely
    oscillatory pair).
    """
    if not s > 0 or not k > 0:
        raise ValueError("s and k must be positive")
    c = k**2 if xi_sq is None else xi_sq
    c = float(np.real(c))
    q = float(np.dot(l, l)) / 4 + c
    rad = s**2 + q
    tol = 1e-12 * max(s**2, abs(c))
    if rad < -tol:
        raise ValueError(f"no real g: s^2 + |l|^2/4 + xi_sq = {rad:.3g} < 0")
    if rad <= tol:
        rad = 0.0
    return q / (np.sqrt(rad) + s)


def g_printed(s: float, l, k: float) -> float:
    """Alternative closed form ``(|l|^2 + 4k^2) / (4s + 2 sqrt(4s^2 + |l|^2) + 4k^2)``.

    Agrees with :func:`g_of_s` to ``O(1/s^2)`` but does not make
    ``xi . xi = k^2`` hold exactly; kept for comparison.
    """
    l2 = float(np.dot(l, l))
    return (l2 + 4 * k**2) / (4 * s + 2 * np.sqrt(4 * s**2 + l2) + 4 * k**2)


def _quantum(scale: float) -> float:
    """Power-of-two step on which sums of magnitude < 2*scale are exact."""
    return 2.0 ** (np.ceil(np.log2(max(scale, 1e-300))) - 52)


def _snap(v, q):
    return np.round(np.asarray(v, dtype=float) / q) * q


@dataclass(frozen=True)
class CgoFrame:
    """Fourier target ``l``, orthonormal ``w1, w2`` orthogonal to ``l``, scale ``s``.

    ``l`` is snapped to a dyadic lattice (relative step 2^-52 of the largest
    component magnitude) so that the imaginary parts of the pair split it
    without rounding.
    """

    l: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    s: float
    k: float
    xi_sq: complex | None = None
    quantum: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        l = np.asarray(self.l, dtype=float)
        w1 = np.asarray(self.w1, dtype=float)
        w2 = np.asarray(self.w2, dtype=float)
        if not (self.s > 0 and self.k > 0):
            raise ValueError("s and k must be positive")
        if l.shape != (3,) or w1.shape != (3,) or w2.shape != (3,):
            raise ValueError("l, w1, w2 must be 3-vectors")
        ln = max(np.linalg.norm(l), 1.0)
        checks = [abs(w1 @ w1 - 1), abs(w2 @ w2 - 1), abs(w1 @ w2), abs(w1 @ l) / ln, abs(w2 @ l) / ln]
        if max(checks) > FRAME_TOL:
            raise ValueError(f"frame not orthonormal (worst defect {max(checks):.2e})")
        q = _quantum(np.abs(l).max() / 2 + self.s)
        object.__setattr__(self, "l", _snap(l, 2 * q))
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "w2", w2)
        object.__setattr__(self, "quantum", q)

    @property
    def c(self) -> float:
        """Target value of ``xi_j . xi_j``."""
        return float(np.real(self.k**2 if self.xi_sq is None else self.xi_sq))


def make_frame(l, s: float, k: float, xi_sq=None, w1=None) -> CgoFrame:
    """Deterministic frame for ``l``: ``w1`` normal to ``l`` and the axis least aligned with it."""
    l = np.asarray(l, dtype=float)
    ln = np.linalg.norm(l)
    if w1 is None:
        if ln == 0:
            # eta ~ w1 x w2 ~ (1,1,1): tangential on every box face
            w1 = np.array([1.0, -1.0, 0.0]) / np.sqrt(2)
            w2 = np.array([1.0, 1.0, -2.0]) / np.sqrt(6)
            return CgoFrame(l, w1, w2, s, k, xi_sq)
        lh = l / ln
        e = np.eye(3)[int(np.argmin(np.abs(lh)))]
        w1 = np.cross(lh, e)
    w1 = np.asarray(w1, dtype=float)
    if ln > 0:
        w1 = w1 - (w1 @ l) / ln**2 * l
    w1 = w1 / np.linalg.norm(w1)
    if ln > 0:
        w2 = np.cross(l / ln, w1)
    else:
        e = np.eye(3)[int(np.argmin(np.abs(w1)))]
        w2 = np.cross(w1, e)
    w2 = w2 / np.linalg.norm(w2)
    return CgoFrame(l, w1, w2, s, k, xi_sq)


def random_frame(rng: np.random.Generator, l, s: float, k: float, xi_sq=None) -> CgoFrame:
    """Frame with a uniformly random in-plane rotation of ``w1``."""
    l = np.asarray(l, dtype=float)
    v = rng.standard_normal(3)
    if np.linalg.norm(l) > 0:
        v = v - (v @ l) / (l @ l) * l
    return make_frame(l, s, k, xi_sq, w1=v)


@dataclass(frozen=True)
class CgoPair:
    frame: CgoFrame
    g: float
    xi1: np.ndarray
    xi2: np.ndarray
    eta1: np.ndarray
    eta2: np.ndarray
    eta_scale: complex = 1.0
    fallback: bool = False

    @property
    def l(self) -> np.ndarray:
        return self.frame.l

    @property
    def s(self) -> float:
        return self.frame.s

    def halves(self):
        return (self.xi1, self.eta1), (self.xi2, self.eta2)

    def defects(self) -> dict:
        """Residuals of the algebraic invariants (all should be ~0)."""
        f = self.frame
        return {
            "xi_sq": max(abs(bdot(x, x) - f.c) for x in (self.xi1, self.xi2)) / max(abs(f.c), 1e-300),
            "xi_eta": max(
                abs(bdot(x, e)) / (np.linalg.norm(x) * np.linalg.norm(e)) for x, e in self.halves()
            ),
            "sum": float(np.abs(self.xi1 + self.xi2 - 1j * f.l).max()),
            "eta_dot": abs(bdot(self.eta1, self.eta2) - 1),
        }


def cgo_pair(frame: CgoFrame) -> CgoPair:
    """Wave vectors and polarisations of the CGO pair for ``frame``.

    ``eta_j = (1 + g/s) l - i(|l|^2/2s) w1_j`` with ``w1_1 = w1``,
    ``w1_2 = -w1``; ``eta_1`` is scaled to unit length and ``eta_2`` by
    ``1/(eta_1 . eta_2)``.  For ``l = 0`` both use ``w1 x w2``.
    """
    s, l, w1, w2 = frame.s, frame.l, frame.w1, frame.w2
    g = g_of_s(s, l, frame.k, frame.c)
    a = s + g
    q = frame.quantum
    half = l / 2  # exact: l lies on the 2q lattice
    c = _snap(s * w2, q)
    im1, im2 = half + c, half - c  # both exact, so im1 + im2 == l
    xi1 = a * w1 + 1j * im1
    xi2 = -a * w1 + 1j * im2
    l2 = float(l @ l)
    if l2 == 0:
        eta = np.cross(w1, w2).astype(complex)
        return CgoPair(frame, g, xi1, xi2, eta, eta.copy(), 1.0, fallback=True)
    eta1 = (a / s) * l - 1j * (l2 / (2 * s)) * w1
    eta2 = (a / s) * l + 1j * (l2 / (2 * s)) * w1
    dot = bdot(eta1, eta2)
    if abs(dot) < DEGENERATE_ETA:
        raise DegenerateEta(f"|eta1 . eta2| = {abs(dot):.2e} below {DEGENERATE_ETA:g} (|l| = {np.sqrt(l2):.3g})")
    n1 = np.linalg.norm(eta1)
    eta1 = eta1 / n1
    scale = 1 / bdot(eta1, eta2)
    eta2 = eta2 * scale
    return CgoPair(frame, g, xi1, xi2, eta1, eta2, scale)


# ---------------------------------------------------------------------------
# fields and traces


def cgo_field(xi, eta):
    """``exp(x . xi) eta`` as a callable of points (n, 3) -> (n, 3)."""
    xi = np.asarray(xi, dtype=complex)
    eta = np.asarray(eta, dtype=complex)

    def field_(x):
        return np.exp(np.asarray(x) @ xi)[..., None] * eta

    return field_


def cgo_curl(xi, eta):
    """``curl(exp(x . xi) eta) = exp(x . xi) xi x eta``."""
    xi = np.asarray(xi, dtype=complex)
    c = np.cross(xi, np.asarray(eta, dtype=complex))

    def field_(x):
        return np.exp(np.asarray(x) @ xi)[..., None] * c

    return field_


def check_overflow(xi, diameter: float, guard: float = OVERFLOW_GUARD) -> float:
    growth = float(np.linalg.norm(np.real(xi))) * diameter
    if growth > guard:
        raise OverflowGuard(f"|Re xi| diam = {growth:.3g} exceeds guard {guard:g}; reduce s")
    return growth


def cgo_trace(xi, eta, patch: BoundaryPatch, guard: float = OVERFLOW_GUARD) -> TangentialField:
    """Tangential trace ``nu x (exp(x . xi) eta)`` on the patch DOFs."""
    check_overflow(xi, patch.grid.diameter, guard)
    return TangentialField.from_vector_field(patch, cgo_field(xi, eta))


def cgo_curl_trace(xi, eta, patch: BoundaryPatch, guard: float = OVERFLOW_GUARD) -> TangentialField:
    """``(nu x curl V) . e`` at patch DOFs, matching the impedance output convention."""
    check_overflow(xi, patch.grid.diameter, guard)
    pts = patch.positions
    vals = np.cross(patch.normal, cgo_curl(xi, eta)(pts))
    return TangentialField(patch, vals[np.arange(patch.size), patch.direction])


@dataclass(frozen=True)
class CgoBoundaryData:
    """Leading-order probe data and the terms left out of it."""

    trace: TangentialField
    xi: np.ndarray
    eta: np.ndarray
    dropped: tuple[str, ...] = field(default=("Psi", "d1", "d1_tilde", "D", "R"))
    born_corrected: bool = False


def n_xi_vector(xi, nu, f) -> np.ndarray:
    """Pointwise ``(nu x f) x xi + (xi x nu) x f``, tangentially projected."""
    xi = np.asarray(xi, dtype=complex)
    nu = np.asarray(nu, dtype=float)
    f = np.asarray(f, dtype=complex)
    out = np.cross(np.cross(nu, f), xi) + np.cross(np.cross(xi, nu), f)
    return out - bdot(out, nu)[..., None] * nu


def n_xi_apply(xi, nu_cross_f: TangentialField) -> TangentialField:
    """Boundary operator ``N_xi`` on patch data.

    For tangential ``f`` the defining expression collapses to ``(nu . xi) f``,
    so in the edge representation ``N_xi`` is a diagonal scaling by
    ``nu . xi`` at every DOF.
    """
    patch = nu_cross_f.patch
    scale = patch.normal @ np.asarray(xi, dtype=complex)
    return TangentialField(patch, scale * nu_cross_f.values)


def n_xi_matrix(xi, patch: BoundaryPatch) -> np.ndarray:
    return np.diag(patch.normal @ np.asarray(xi, dtype=complex))
