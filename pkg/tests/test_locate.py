import numpy as np
import pytest
from hypothesis import given, strategies as st

from maxtomo.core import RefractiveIndexField, make_box_grid
from maxtomo.errors import Infeasible, NoPeaks, RankDeficient, UnderResolved
from maxtomo.locate import (
    InclusionScenario,
    LocateSettings,
    asymptotic_functional,
    find_peaks,
    fit_moments,
    localize_from_table,
    perturbed_index,
    surrogate_table,
    synthesize_scenario,
)
from maxtomo.recon import ContrastVolume, LGrid


@given(st.integers(0, 2**31 - 1))
def test_synthesis_respects_constraints(seed):
    sc = synthesize_scenario(seed, 2, 0.3, 0.2, 0.05)
    assert sc.m == 2
    assert np.linalg.norm(sc.centers[0] - sc.centers[1]) >= 0.3
    assert np.all(sc.centers >= 0.2) and np.all(sc.centers <= 0.8)


def test_synthesis_deterministic():
    a, b = synthesize_scenario(7, 3, 0.3, 0.2, 0.05), synthesize_scenario(7, 3, 0.3, 0.2, 0.05)
    np.testing.assert_array_equal(a.centers, b.centers)
    np.testing.assert_array_equal(a.indices, b.indices)


def test_empty_scenario_is_valid():
    assert synthesize_scenario(0, 0, 0.3, 0.2, 0.05).m == 0


def test_packing_infeasible():
    with pytest.raises(Infeasible):
        synthesize_scenario(0, 50, 0.5, 0.2, 0.05)


def test_alpha_too_large_infeasible():
    with pytest.raises(Infeasible):
        synthesize_scenario(0, 2, 0.3, 0.2, 0.2)


def test_perturbed_index_empty_returns_background():
    g = make_box_grid((1, 1, 1), 8)
    back = RefractiveIndexField.homogeneous(g, 1.2)
    sc = InclusionScenario(np.zeros((0, 3)), 0.1, [], 0.3, 0.2)
    assert perturbed_index(sc, back, g) is back


@pytest.mark.parametrize("fill", ["midpoint", "fraction"])
def test_ball_volume_count(fill):
    g = make_box_grid((1, 1, 1), 32)
    back = RefractiveIndexField.homogeneous(g)
    sc = InclusionScenario([[0.5, 0.5, 0.5]], 0.1, [2.0], 0.3, 0.2)
    n = perturbed_index(sc, back, g, fill=fill)
    # each edge family carries one copy of the ball
    count = np.sum(g.edge_volumes * n.contrast.real) / 3 / g.cell_volume
    expect = 4 / 3 * np.pi * 0.1**3 / g.cell_volume
    assert count == pytest.approx(expect, rel=0.15)


def test_fraction_fill_volume_smooth_in_alpha():
    g = make_box_grid((1, 1, 1), 24)
    back = RefractiveIndexField.homogeneous(g)
    for a in (0.045, 0.06, 0.09):
        sc = InclusionScenario([[0.5, 0.5, 0.5]], a, [2.0], 0.3, 0.2)
        vol = np.sum(g.edge_volumes * perturbed_index(sc, back, g).contrast.real) / 3
        assert vol == pytest.approx(4 / 3 * np.pi * a**3, rel=0.15)


def test_under_resolved():
    g = make_box_grid((1, 1, 1), 16)
    sc = InclusionScenario([[0.5, 0.5, 0.5]], g.spacing[0] / 2, [2.0], 0.3, 0.2)
    with pytest.raises(UnderResolved):
        perturbed_index(sc, RefractiveIndexField.homogeneous(g), g)


def test_functional_trivial_cases():
    eta = np.array([1.0, 0, 0])
    const = lambda z: np.tile(eta, (len(z), 1))
    empty = InclusionScenario(np.zeros((0, 3)), 0.1, [], 0.3, 0.2)
    assert asymptotic_functional(empty, const, const) == 0
    same = InclusionScenario([[0.5, 0.5, 0.5]], 0.1, [1.0], 0.3, 0.2)
    assert asymptotic_functional(same, const, const) == 0


@given(st.floats(0.01, 0.1), st.floats(0.1, 3), st.floats(0, 1))
def test_functional_single_term(alpha, cre, cim):
    eta = np.array([0.6, 0.0, 0.8])
    const = lambda z: np.tile(eta, (len(z), 1))
    sc = InclusionScenario([[0.5, 0.5, 0.5]], alpha, [1 + cre + 1j * cim], 0.3, 0.2)
    val = asymptotic_functional(sc, const, const, M=np.eye(3))
    assert val == pytest.approx(alpha**3 * (cre + 1j * cim), rel=1e-12)


def test_no_peaks_on_empty_data():
    g = make_box_grid((1, 1, 1), 8)
    with pytest.raises(NoPeaks):
        find_peaks(ContrastVolume(g, np.zeros(g.cells, complex)), 0.15)


def test_model_consistent_inversion():
    g = make_box_grid((1, 1, 1), 24)
    sc = InclusionScenario([[0.3, 0.5, 0.5], [0.7, 0.5, 0.5]], 0.06, [2 + 0.5j] * 2, 0.4, 0.2)
    k = 11.3
    table = surrogate_table(sc, LGrid((1, 1, 1), 2 * k, k).samples)
    res = localize_from_table(table, g, 2, LocateSettings(c0=0.4))
    order = np.argsort(res.centers[:, 0])
    np.testing.assert_allclose(res.centers[order], sc.centers, atol=1e-6)
    q = np.array([res.moments[i].q for i in order])
    np.testing.assert_allclose(q, sc.planted_moments(), rtol=1e-6)


def test_moment_fit_rank_deficient():
    L = LGrid((1, 1, 1), 10.0, 5.0).samples
    sc = InclusionScenario([[0.5, 0.5, 0.5]], 0.05, [2.0], 0.3, 0.2)
    table = surrogate_table(sc, L)
    with pytest.raises(RankDeficient):
        fit_moments(table, np.array([[0.5, 0.5, 0.5], [0.5, 0.5, 0.5]]))
