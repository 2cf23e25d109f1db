import numpy as np
import pytest
from hypothesis import given, strategies as st

from maxtomo.cgo import (
    CgoFrame,
    bdot,
    cgo_curl,
    cgo_field,
    cgo_pair,
    cgo_trace,
    g_of_s,
    g_printed,
    make_frame,
    n_xi_apply,
    n_xi_matrix,
    n_xi_vector,
    random_frame,
)
from maxtomo.core import BoundaryPatch, TangentialField, make_box_grid
from maxtomo.errors import DegenerateEta, OverflowGuard

vec3 = st.lists(st.floats(-30, 30, allow_nan=False), min_size=3, max_size=3).map(np.array)


def test_g_unit_case():
    assert g_of_s(1.0, np.zeros(3), 1.0) == pytest.approx(np.sqrt(2) - 1, abs=1e-15)


def test_g_large_s_against_printed_form():
    l = np.array([0.0, 0.0, 2.0])
    g = g_of_s(100.0, l, 1.0)
    gp = g_printed(100.0, l, 1.0)
    assert g == pytest.approx(0.0099995, abs=1e-7)
    assert gp == pytest.approx(0.009950, abs=1e-6)
    assert abs(g - gp) < 10 / 100**2
    assert 100 * g == pytest.approx(1.0, rel=1e-3)


@given(vec3, st.floats(0.1, 20))
def test_g_asymptotics(l, k):
    lim = (l @ l + 4 * k**2) / 8
    prev = None
    for s in (10.0, 100.0, 1000.0):
        g = g_of_s(s, l, k)
        assert g > 0
        assert abs(s * g - lim) <= 2 / s * max(lim, 1) * max(1, lim / s)
        gap = abs(g - g_printed(s, l, k))
        if prev is not None:
            assert gap <= prev
        prev = gap


@given(vec3, st.floats(0.1, 20), st.floats(0.1, 50))
def test_g_solves_defining_equation(l, k, s):
    g = g_of_s(s, l, k)
    assert (s + g) ** 2 == pytest.approx(s**2 + l @ l / 4 + k**2, rel=1e-12)


def test_worked_frame_example():
    fr = CgoFrame(np.array([0, 0, 2.0]), np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), 1.0, 1.0)
    pair = cgo_pair(fr)
    assert pair.g == pytest.approx(np.sqrt(3) - 1, abs=1e-15)
    np.testing.assert_allclose(pair.xi1, [np.sqrt(3), 1j, 1j], atol=1e-15)
    assert bdot(pair.xi1, pair.xi1) == pytest.approx(1.0, abs=1e-14)
    np.testing.assert_array_equal(pair.xi1 + pair.xi2, [0, 0, 2j])
    # pre-normalisation eta = (s+g)/s l - i |l|^2/(2s) w1 = (-2i, 0, 2 sqrt 3)
    raw = np.array([-2j, 0, 2 * np.sqrt(3)])
    np.testing.assert_allclose(pair.eta1, raw / np.linalg.norm(raw), atol=1e-15)
    assert abs(bdot(pair.xi1, pair.eta1)) < 1e-14


def test_frame_rejects_non_orthogonal():
    with pytest.raises(ValueError):
        CgoFrame(np.array([0, 0, 1.0]), np.array([1.0, 0, 0.1]), np.array([0, 1.0, 0]), 1.0, 1.0)


@given(st.integers(0, 2**31 - 1))
def test_random_pair_invariants(seed):
    # probing regime: |l| <= 4k, s up to 5k
    rng = np.random.default_rng(seed)
    k = rng.uniform(0.5, 20)
    l = rng.normal(size=3)
    l *= rng.uniform(0.0, 4.0) * k / np.linalg.norm(l)
    s = rng.uniform(0.2, 5) * k
    pair = cgo_pair(random_frame(rng, l, s, k))
    d = pair.defects()
    assert d["xi_sq"] <= 1e-12
    assert d["xi_eta"] <= 1e-10
    assert d["sum"] == 0.0
    assert d["eta_dot"] <= 1e-12


@given(st.integers(0, 2**31 - 1))
def test_xi_square_at_rounding_floor(seed):
    # far outside the probing regime the residual sits at eps |xi|^2
    rng = np.random.default_rng(seed)
    l = rng.normal(size=3) * rng.uniform(0.1, 400)
    k = rng.uniform(0.05, 20)
    s = rng.uniform(0.2, 5) * (np.linalg.norm(l) / 2 + k)
    pair = cgo_pair(random_frame(rng, l, s, k))
    for xi in (pair.xi1, pair.xi2):
        scale = np.sum(np.abs(xi) ** 2)
        assert abs(bdot(xi, xi) - k**2) <= 16 * np.finfo(float).eps * scale
    assert pair.defects()["sum"] == 0.0


@given(st.integers(0, 2**31 - 1))
def test_physical_convention_invariants(seed):
    rng = np.random.default_rng(seed)
    k = rng.uniform(1, 15)
    l = rng.normal(size=3)
    l *= rng.uniform(0.1, 1.9) * k / np.linalg.norm(l)
    s = np.sqrt(k**2 - l @ l / 4) + rng.uniform(0.1, 3)
    pair = cgo_pair(random_frame(rng, l, s, k, xi_sq=-(k**2)))
    for xi in (pair.xi1, pair.xi2):
        assert abs(bdot(xi, xi) + k**2) <= 1e-12 * k**2 * max(1, (s / k) ** 2)
    assert pair.defects()["sum"] == 0.0


def test_zero_l_fallback():
    pair = cgo_pair(make_frame(np.zeros(3), 2.0, 1.5))
    assert pair.fallback
    for xi, eta in pair.halves():
        assert abs(bdot(xi, eta)) < 1e-14
        assert bdot(xi, xi) == pytest.approx(1.5**2, rel=1e-13)


def test_make_frame_deterministic():
    a, b = make_frame([1.0, 2.0, 3.0], 5.0, 2.0), make_frame([1.0, 2.0, 3.0], 5.0, 2.0)
    np.testing.assert_array_equal(a.w1, b.w1)


def test_degenerate_eta():
    # eta1 . eta2 = ((s+g)/s)^2 |l|^2 + |l|^4/(4 s^2) collapses for tiny nonzero l
    fr = CgoFrame(np.array([0, 0, 1e-5]), np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), 1.0, 1.0)
    with pytest.raises(DegenerateEta):
        cgo_pair(fr)


def test_trace_constant_field():
    g = make_box_grid((1, 1, 1), 4)
    top = BoundaryPatch.from_faces(g, ("z+",))
    t = cgo_trace(np.zeros(3), np.array([1.0, 0, 0]), top)
    # x-directed edges carry the x component, y-directed edges carry 0
    np.testing.assert_array_equal(t.values, (top.direction == 0).astype(float))


def test_trace_unimodular_for_imaginary_xi():
    g = make_box_grid((1, 1, 1), 6)
    top = BoundaryPatch.from_faces(g, ("z+",))
    eta = np.array([0.6, 0.8, 0.0])
    t = cgo_trace(1j * np.array([3.0, -1.0, 2.0]), eta, top)
    np.testing.assert_allclose(np.abs(t.values), np.abs(eta[top.direction]), rtol=1e-14)


def test_trace_growth_ratio():
    pair = cgo_pair(make_frame([0, 0, 2.0], 3.0, 1.0, w1=[1.0, 0, 0]))
    f = cgo_field(pair.xi1, pair.eta1)
    p0, p1 = np.array([[0.0, 0.3, 1.0]]), np.array([[1.0, 0.3, 1.0]])
    ratio = np.linalg.norm(f(p1)) / np.linalg.norm(f(p0))
    assert ratio == pytest.approx(np.exp(3.0 + pair.g), rel=1e-13)


def test_overflow_guard():
    g = make_box_grid((1, 1, 1), 4)
    top = BoundaryPatch.from_faces(g, ("z+",))
    with pytest.raises(OverflowGuard):
        cgo_trace(np.array([50.0, 0, 0]), np.array([0, 1.0, 0]), top)


def test_cgo_field_solves_maxwell():
    pair = cgo_pair(make_frame([1.0, -2.0, 0.5], 4.0, 3.0))
    xi, eta = pair.xi1, pair.eta1
    x, h = np.array([[0.3, 0.4, 0.5]]), 1e-4
    curl = cgo_curl(xi, eta)

    def curl_fd(F, p):
        J = np.array([(F(p + h * e) - F(p - h * e))[0] / (2 * h) for e in np.eye(3)])  # J[j, i] = d_j F_i
        return np.array([J[1, 2] - J[2, 1], J[2, 0] - J[0, 2], J[0, 1] - J[1, 0]])

    cc = curl_fd(curl, x)
    # curl curl V = (xi . xi) V for divergence-free V with xi . eta = 0 ... up to sign: -(xi . xi) V
    np.testing.assert_allclose(cc, -bdot(xi, xi) * cgo_field(xi, eta)(x)[0], rtol=1e-6)


def test_n_xi_hand_examples():
    nu = np.array([0, 0, 1.0])
    f = np.array([1.0, 0, 0])
    np.testing.assert_allclose(n_xi_vector([0, 0, 1.0], nu, f), [1, 0, 0])
    np.testing.assert_allclose(n_xi_vector([1.0, 0, 0], nu, f), [0, 0, 0])
    np.testing.assert_allclose(n_xi_vector([0, 0, 0], nu, f), [0, 0, 0])


@given(vec3, st.floats(-5, 5), st.floats(-5, 5))
def test_n_xi_is_normal_component_scaling(xi, a, b):
    nu = np.array([0, 0, 1.0])
    f = np.array([a, b, 0.0])
    np.testing.assert_allclose(n_xi_vector(xi, nu, f), (nu @ xi) * f, atol=1e-10 * (1 + np.abs(xi).max()))


def test_n_xi_apply_matches_matrix():
    g = make_box_grid((1, 1, 1), 4)
    patch = BoundaryPatch.from_faces(g, ("z+", "x-"))
    xi = np.array([1.0 + 2j, -0.5, 3j])
    f = TangentialField(patch, np.arange(patch.size) + 1j)
    np.testing.assert_allclose(n_xi_apply(xi, f).values, n_xi_matrix(xi, patch) @ f.values)
    assert np.all(n_xi_apply(np.zeros(3), f).values == 0)


def test_zero_l_polarization_is_tangential_on_every_face():
    pair = cgo_pair(make_frame(np.zeros(3), 20.0, 7.3))
    for eta in (pair.eta1, pair.eta2):
        for axis in range(3):
            tangential = np.delete(eta, axis)
            assert np.linalg.norm(tangential) > 0.5
