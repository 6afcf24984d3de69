import numpy as np
import pytest
from hypothesis import given, strategies as st

from ergomix.grid import (GridDensity, GridError, MonotoneInterpolant, grid_from_function,
                          half_nodes, seed_density, unit_nodes)
from ergomix.maps import HALF_LINE, UNIT_INTERVAL


def test_unit_nodes_layout():
    x = unit_nodes(4096)
    assert x[0] == 0.0 and x[1] == pytest.approx(1e-30) and x[-1] == 1.0
    assert len(x) == 4096 and np.all(np.diff(x) > 0)


@given(st.floats(-5, 5, allow_subnormal=False), st.floats(-5, 5, allow_subnormal=False))
def test_interpolant_reproduces_linear_data(a, b):
    nodes = np.sort(np.random.default_rng(1).random(40))
    f = MonotoneInterpolant(nodes, a + b * nodes, UNIT_INTERVAL)
    q = np.linspace(nodes[0], nodes[-1], 101)
    assert np.allclose(f(q), a + b * q, atol=1e-12)


def test_interpolant_clamps_and_counts():
    nodes = np.linspace(0, 1, 10)
    f = MonotoneInterpolant(nodes, nodes ** 2, UNIT_INTERVAL)
    assert f.outside(np.array([-0.5, 0.5, 2.0])) == 2
    assert f(np.array([2.0]))[0] == pytest.approx(1.0)


@given(st.lists(st.floats(0, 10).map(lambda v: round(v, 6)), min_size=5, max_size=30))
def test_interpolant_preserves_monotone_data(vals):
    vals = np.sort(np.asarray(vals))
    nodes = np.arange(len(vals), dtype=float)
    f = MonotoneInterpolant(nodes, vals, HALF_LINE)
    q = np.linspace(0, len(vals) - 1, 500)
    assert np.all(np.diff(f(q)) >= -1e-12)


def test_quadrature_against_density(farey):
    # int_0^1 x * (1/x) dx = 1 and int_0^1 x^2 / x dx = 1/2
    g = grid_from_function(farey, lambda x: x, normalize=False)
    assert g.mass == pytest.approx(1.0, abs=1e-12)
    q = grid_from_function(farey, lambda x: x * x, normalize=False)
    assert q.mass == pytest.approx(0.5, abs=1e-8)


def test_halfline_quadrature(halfline):
    g = grid_from_function(halfline, lambda s: np.exp(-s), normalize=False)
    assert g.mass == pytest.approx(1.0 - np.exp(-60.0), abs=1e-8)


def test_validation_errors(farey):
    x = unit_nodes(16)
    with pytest.raises(GridError):
        GridDensity(x[:3], np.ones(3), UNIT_INTERVAL, farey.density)
    with pytest.raises(GridError):
        GridDensity(x, -np.ones(16), UNIT_INTERVAL, farey.density)
    with pytest.raises(GridError):
        GridDensity(x[::-1], np.ones(16), UNIT_INTERVAL, farey.density)
    with pytest.raises(GridError):
        GridDensity(x, np.ones(16), UNIT_INTERVAL)
    bad = np.ones(16)
    bad[3] = np.nan
    with pytest.raises(GridError):
        GridDensity(x, bad, UNIT_INTERVAL, farey.density)


def test_shape_flags(farey):
    g = seed_density(farey, "linear")
    assert g.is_monotone_increasing() and g.is_concave() and not g.is_monotone_decreasing()
    sq = seed_density(farey, "quadratic")
    assert sq.is_monotone_increasing() and not sq.is_concave()


def test_seed_names(farey, halfline):
    with pytest.raises(GridError, match="choose from"):
        seed_density(farey, "exp")
    g = seed_density(halfline, "exp2")
    assert g.mass == pytest.approx(1.0) and g.is_monotone_decreasing()


def test_csv_round_trip(farey):
    g = seed_density(farey, "quadratic")
    text = g.to_csv()
    assert text.splitlines()[0] == "x,value"
    back = GridDensity.from_csv(text, UNIT_INTERVAL, farey.density)
    assert np.array_equal(back.nodes, g.nodes) and np.array_equal(back.values, g.values)


def test_normalized_has_unit_mass(halfline):
    g = grid_from_function(halfline, lambda s: 3 * np.exp(-s), nodes=half_nodes(512))
    assert g.mass == pytest.approx(1.0) and g.quadrature_mass() == pytest.approx(1.0)
