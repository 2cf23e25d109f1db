import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from hypothesis import given, strategies as st

from maxtomo.core import BoundaryPatch, RefractiveIndexField, TangentialField, WaveParams, make_box_grid
from maxtomo.errors import NearResonance, QuadratureBreakdown
from maxtomo.forward import (
    assemble,
    boundary_traces,
    curl_matrix,
    discrete_l2,
    dyadic_green,
    grad_matrix,
    helmholtz_phi,
    interpolate_to_point,
    plane_wave,
    plane_wave_curl,
    solve_bvp,
    stratton_chu_check,
)

D = np.array([1.0, 2.0, 2.0]) / 3
P = np.array([2.0, -1.0, 0.0]) / np.sqrt(5)


def _plane_solution(N, k=3.0, faces=None):
    g = make_box_grid((1, 1, 1), N)
    wp = WaveParams.from_wavenumber(k)
    patch = BoundaryPatch.full(g)
    sys_ = assemble(g, RefractiveIndexField.homogeneous(g), wp)
    sol = solve_bvp(sys_, TangentialField.from_vector_field(patch, plane_wave(k, D, P)))
    return g, sol


def test_curl_of_gradient_vanishes():
    g = make_box_grid((1, 1.5, 2), (4, 5, 6))
    C, G = curl_matrix(g), grad_matrix(g)
    assert abs(C @ G).max() == 0


def test_assembly_is_deterministic(grid8, vac8, wp3):
    a, b = assemble(grid8, vac8, wp3).K, assemble(grid8, vac8, wp3).K
    np.testing.assert_array_equal(a.indptr, b.indptr)
    np.testing.assert_array_equal(a.indices, b.indices)
    np.testing.assert_array_equal(a.data, b.data)


def test_operator_symmetric(grid8, wp3):
    n = RefractiveIndexField.from_function(grid8, lambda p: 1 + 0.2j * (np.linalg.norm(p - 0.5, axis=1) < 0.2))
    K = assemble(grid8, n, wp3).K
    assert abs(K - K.T).max() == 0


def test_plane_wave_residual_second_order(vac8):
    res = []
    for N in (8, 16):
        g = make_box_grid((1, 1, 1), N)
        sys_ = assemble(g, RefractiveIndexField.homogeneous(g), WaveParams.from_wavenumber(3.0))
        E = g.sample(plane_wave(3.0, D, P))
        r = (sys_.K @ E)[g.interior_dofs]
        res.append(np.max(np.abs(r)))
    assert 3.0 < res[0] / res[1] < 5.0


def test_zero_data_gives_zero_field(grid8, vac8, wp3):
    sol = solve_bvp(assemble(grid8, vac8, wp3), TangentialField.zeros(BoundaryPatch.full(grid8)))
    assert np.all(sol.E == 0)


def test_plane_wave_convergence_order():
    errs = []
    for N in (8, 16):
        g, sol = _plane_solution(N)
        exact = g.sample(plane_wave(3.0, D, P))
        errs.append(discrete_l2(g, sol.E - exact) / discrete_l2(g, exact))
    order = np.log2(errs[0] / errs[1])
    assert 1.7 < order < 2.3


def test_curl_trace_matches_analytic():
    errs = []
    for N in (8, 16):
        g, sol = _plane_solution(N)
        top = BoundaryPatch.from_faces(g, ("z+",))
        e, t = boundary_traces(sol, top)
        exact = TangentialField.from_vector_field(top, lambda p: np.cross([0, 0, 1.0], plane_wave_curl(3.0, D, P)(p)))
        errs.append(np.max(np.abs(t.values - exact.values)) / np.max(np.abs(exact.values)))
    assert errs[1] < 0.05
    assert 3.0 < errs[0] / errs[1] < 5.5


def test_zero_field_has_zero_traces(grid8, vac8, wp3):
    sol = solve_bvp(assemble(grid8, vac8, wp3), TangentialField.zeros(BoundaryPatch.full(grid8)))
    e, t = boundary_traces(sol, BoundaryPatch.from_faces(grid8, ("z+",)))
    assert np.all(e.values == 0) and np.all(t.values == 0)


def test_near_resonance_detected(grid8, vac8):
    # locate a discrete Maxwell eigenvalue of the interior pencil
    sys1 = assemble(grid8, vac8, WaveParams.from_wavenumber(1.0))
    M = sp.diags(grid8.edge_volumes[sys1.interior] / grid8.cell_volume)
    A = (sys1.K_II + M).tocsc()
    lam = spla.eigsh(A, k=1, M=M.tocsc(), sigma=20.0, which="LM", return_eigenvectors=False)[0]
    sys_ = assemble(grid8, vac8, WaveParams.from_wavenumber(float(np.sqrt(lam))))
    with pytest.raises(NearResonance):
        solve_bvp(sys_, TangentialField.zeros(BoundaryPatch.full(grid8)))


def test_helmholtz_kernel_value():
    v = helmholtz_phi(np.array([1.0, 0, 0]), np.zeros(3), 1.0)
    assert abs(v - (np.cos(1) + 1j * np.sin(1)) / (4 * np.pi)) < 1e-16
    # tabulated six-digit value (last digit of the real part is rounded up)
    assert abs(v - (0.042997 + 0.066962j)) < 2e-6


def test_laplace_limit():
    v = helmholtz_phi(np.array([0, 0.5, 0]), np.zeros(3), 0.0)
    assert v == pytest.approx(1 / (4 * np.pi * 0.5)) and np.imag(v) == 0


@given(st.floats(0.1, 10), st.floats(0.05, 5))
def test_kernel_modulus(k, r):
    v = helmholtz_phi(np.array([r, 0, 0]), np.zeros(3), k)
    assert abs(abs(v) - 1 / (4 * np.pi * r)) < 1e-12 / r


@given(st.integers(0, 2**31 - 1))
def test_dyadic_green_symmetry(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=3), rng.normal(size=3)
    np.testing.assert_allclose(dyadic_green(x, y, 2.0), dyadic_green(y, x, 2.0).T, atol=1e-13)


def test_dyadic_green_solves_vector_helmholtz():
    k, y, x = 2.0, np.zeros(3), np.array([0.7, 0.3, -0.4])
    h = 1e-3

    def col(p, j):
        return dyadic_green(p, y, k)[:, j]

    for j in range(3):
        # curl curl = grad div - laplacian by central differences
        lap = sum(col(x + h * e, j) - 2 * col(x, j) + col(x - h * e, j) for e in np.eye(3)) / h**2
        div = lambda p: sum((col(p + h * e, j)[i] - col(p - h * e, j)[i]) / (2 * h) for i, e in enumerate(np.eye(3)))
        grad_div = np.array([(div(x + h * e) - div(x - h * e)) / (2 * h) for e in np.eye(3)])
        resid = grad_div - lap - k**2 * col(x, j)
        assert np.max(np.abs(resid)) < 1e-4 * np.max(np.abs(k**2 * col(x, j)))


def test_dyadic_green_far_field():
    k, y, rh = 2.0, np.zeros(3), np.array([0.6, 0.0, 0.8])
    gaps = []
    for r in (50 / k, 100 / k):
        x = r * rh
        far = helmholtz_phi(x, y, k) * (np.eye(3) - np.outer(rh, rh))
        gaps.append(np.max(np.abs(dyadic_green(x, y, k) - far)))
    # remainder is O(1/r^2): halves twice when r doubles
    assert 3.5 < gaps[0] / gaps[1] < 4.5
    assert gaps[1] < 4 / (k * 100 / k) * abs(helmholtz_phi(100 / k * rh, y, k))


def test_stratton_chu_reproduction():
    errs = []
    x = np.array([0.5, 0.5, 0.5])
    exact = plane_wave(3.0, D, P)(x[None])[0]
    for N in (8, 16):
        g, sol = _plane_solution(N)
        errs.append(np.linalg.norm(stratton_chu_check(sol, x) - exact) / np.linalg.norm(exact))
    assert errs[1] <= 0.01
    assert errs[0] / errs[1] >= 2


def test_stratton_chu_zero_field(grid8, vac8, wp3):
    sol = solve_bvp(assemble(grid8, vac8, wp3), TangentialField.zeros(BoundaryPatch.full(grid8)))
    assert np.all(stratton_chu_check(sol, np.array([0.5, 0.5, 0.5])) == 0)


def test_stratton_chu_too_close_to_boundary():
    g, sol = _plane_solution(8)
    with pytest.raises(QuadratureBreakdown):
        stratton_chu_check(sol, np.array([0.1, 0.5, 0.5]))


def test_interpolation_of_plane_wave():
    g, sol = _plane_solution(16)
    x = np.array([0.41, 0.52, 0.63])
    exact = plane_wave(3.0, D, P)(x[None])[0]
    assert np.linalg.norm(interpolate_to_point(g, sol.E, x) - exact) < 0.01
