import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rbsim.errors import PlacementError, ScenarioError
from rbsim.network import (
    EASTBOUND,
    WESTBOUND,
    TrackLayout,
    build_graph,
    loop_resistance,
    section_resistances,
)
from rbsim.substation import SubstationParams, substation_current, twelve_pulse_no_load

R_P, R_T = 10e-6, 20e-6


# substation

def test_substation_current_examples():
    p = SubstationParams(0.0, V0=650.0, R_th=0.05)
    assert substation_current(650.0, p) == 0
    assert substation_current(600.0, p) == pytest.approx(1000.0)
    assert substation_current(700.0, p) == 0


@given(st.floats(0.0, 1500.0), st.floats(0.0, 200.0))
def test_substation_current_monotone_and_nonnegative(V, dV):
    p = SubstationParams(0.0)
    I = substation_current(V, p)
    assert I >= 0 and V * I >= 0
    assert substation_current(V + dV, p) <= I
    if V >= p.V0:
        assert I == 0


def test_twelve_pulse():
    assert twelve_pulse_no_load(481.3) == pytest.approx(650.0, abs=0.05)
    assert twelve_pulse_no_load(962.6) == pytest.approx(2 * twelve_pulse_no_load(481.3))
    with pytest.raises(ValueError):
        twelve_pulse_no_load(0.0)


@pytest.mark.parametrize("kw", [{"V0": 0}, {"R_th": 0}, {"aux_load": -1}])
def test_substation_invalid(kw):
    with pytest.raises(ValueError):
        SubstationParams(0.0, **kw)


# layout

def test_layout_validation():
    with pytest.raises(ScenarioError):
        TrackLayout((0, 0), (0,))
    with pytest.raises(ScenarioError):
        TrackLayout((0, 100), ())
    with pytest.raises(ScenarioError):
        TrackLayout((0, 100), (50,), R_Ppu=0)
    with pytest.raises(ScenarioError):
        TrackLayout((0, 100), (50,), extent=(10, 100))
    assert TrackLayout((0, 100), (50,)).extent == (0, 100)


def test_train_outside_extent():
    lay = TrackLayout((0, 1000), (500,))
    with pytest.raises(PlacementError):
        build_graph(lay, [1200.0])


# section resistances

def test_west_branch_zero_at_west_node():
    s = section_resistances(0.0, 0.0, 1000.0, R_P, R_T)
    assert s.R_WP == 0 and s.R_WT == 0


def test_west_branch_500m():
    assert section_resistances(500.0, 0.0, 1500.0, R_P, R_T).R_WP == pytest.approx(0.005)


def test_literal_two_section_form():
    # With the first node at the origin and p measured from the start of its
    # section, the adjacent-node form reduces to the eight literal formulas.
    x1, x2, x3 = 0.0, 1200.0, 2500.0
    p1, p2 = 300.0, 450.0
    s1 = section_resistances(x1 + p1, x1, x2, R_P, R_T)
    s2 = section_resistances(x2 + p2, x2, x3, R_P, R_T)
    assert s1.R_WP == pytest.approx((p1 - x1) * R_P)
    assert s1.R_WT == pytest.approx((p1 - x1) * R_T)
    assert s1.R_EP == pytest.approx((x2 - x1 - p1) * R_P)
    assert s1.R_ET == pytest.approx((x2 - x1 - p1) * R_T)
    assert s2.R_WP == pytest.approx(((x2 + p2) - x2) * R_P)
    assert s2.R_WT == pytest.approx(((x2 + p2) - x2) * R_T)
    assert s2.R_EP == pytest.approx((x3 - x2 - p2) * R_P)
    assert s2.R_ET == pytest.approx((x3 - x2 - p2) * R_T)


def test_section_rejects_outside_position():
    with pytest.raises(PlacementError):
        section_resistances(-1.0, 0.0, 100.0, R_P, R_T)


@settings(max_examples=300)
@given(st.floats(0.0, 1.0), st.floats(1.0, 5000.0), st.floats(-1e4, 1e4))
def test_telescoping(frac, length, x0):
    p = x0 + frac * length
    s = section_resistances(min(max(p, x0), x0 + length), x0, x0 + length, R_P, R_T)
    assert s.R_WP + s.R_EP == pytest.approx(length * R_P, rel=1e-12)
    assert s.R_WT + s.R_ET == pytest.approx(length * R_T, rel=1e-12)


# graph

LAY = TrackLayout((0.0, 1500.0, 3000.0), (750.0, 2250.0), R_P, R_T)


def test_graph_sorted_and_chained():
    g = build_graph(LAY, [2000.0, 100.0, 1000.0])
    chain = g.chain(EASTBOUND)
    pos = [g.nodes[i].position for i in chain]
    assert pos == sorted(pos)
    assert len(g.branches) == len(chain) - 1
    for br in g.branches:
        d = g.nodes[br.b].position - g.nodes[br.a].position
        assert d >= 0
        assert br.R_power == pytest.approx(d * R_P)
        assert br.R_traction == pytest.approx(d * R_T)


def test_two_trains_between_same_nodes():
    g = build_graph(LAY, [900.0, 1700.0])
    a, b = g.substation_node(0), g.substation_node(1)
    total = sum(br.R_power for br in g.branches)
    assert total == pytest.approx(1500.0 * R_P)
    assert loop_resistance(g, a, b) == pytest.approx(1500.0 * (R_P + R_T))


def test_merging():
    g = build_graph(LAY, [1000.0, 1000.0, 750.0])
    assert len(g.nodes) == 2 + 1
    assert g.train_node(0) == g.train_node(1)
    assert g.train_node(2) == g.substation_node(0)


def test_tracks_share_substations_only():
    g = build_graph(LAY, [1000.0, 1000.0], tracks=[EASTBOUND, WESTBOUND])
    assert g.train_node(0) != g.train_node(1)
    assert len(g.nodes) == 4
    assert set(g.tracks) == {EASTBOUND, WESTBOUND}


def test_loop_resistance_examples():
    lay = TrackLayout((0.0, 1000.0), (0.0, 1000.0), R_P, R_T)
    g = build_graph(lay, [])
    a, b = g.substation_node(0), g.substation_node(1)
    assert loop_resistance(g, a, a) == 0
    assert loop_resistance(g, a, b) == pytest.approx(0.03)
    assert loop_resistance(g, b, a) == loop_resistance(g, a, b)


@settings(max_examples=100)
@given(st.lists(st.integers(0, 3000).map(float), min_size=1, max_size=6))
def test_node_count_after_merging(xs):
    g = build_graph(LAY, xs)
    distinct = {x for x in xs if all(abs(x - s) > 1e-9 for s in LAY.substation_positions)}
    assert len(g.nodes) == 2 + len(distinct)


@settings(max_examples=100)
@given(st.floats(800.0, 2200.0), st.floats(-40.0, 40.0))
def test_moving_train_shifts_branches_linearly(x, d):
    g0 = build_graph(LAY, [x])
    g1 = build_graph(LAY, [x + d])
    k0, k1 = g0.train_node(0), g1.train_node(0)
    west0 = next(br for br in g0.branches if br.b == k0)
    west1 = next(br for br in g1.branches if br.b == k1)
    assert west1.R_power - west0.R_power == pytest.approx(d * R_P, abs=1e-15)
    assert math.isclose(loop_resistance(g1, g1.substation_node(0), g1.substation_node(1)),
                        1500.0 * (R_P + R_T), rel_tol=1e-12)
