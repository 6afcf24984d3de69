import numpy as np
import pytest
from hypothesis import given, strategies as st

from ergomix.grid import GridDensity, grid_from_function, half_nodes, seed_density, unit_nodes
from ergomix.maps import UNIT_INTERVAL
from ergomix.transfer import (TransferError, TransferOperator, apply_transfer,
                              check_cone_preservation, iterate_transfer, truncate_plateau)


def test_farey_closed_form_oracle(farey):
    g = grid_from_function(farey, lambda x: x, normalize=False)
    pg = apply_transfer(farey, g)
    x = g.nodes
    assert np.max(np.abs(pg.values - 2 * x / (1 + x) ** 2)) <= 1e-9


def test_constant_is_fixed(any_map):
    nodes = unit_nodes() if any_map.kind == UNIT_INTERVAL else half_nodes()
    out = TransferOperator(any_map, nodes).apply_array(np.ones_like(nodes))
    # the half-line grid stops at 60, so only interior nodes see the full preimage set
    inner = nodes <= 20 if any_map.kind != UNIT_INTERVAL else slice(None)
    assert np.max(np.abs(out[inner] - 1)) <= 1e-10


@given(st.lists(st.floats(0.05, 1.0), min_size=3, max_size=3))
def test_mass_conserved_for_positive_densities(coef):
    from ergomix.maps import build_builtin
    m = build_builtin("farey")
    a, b, c = coef
    g = grid_from_function(m, lambda x: a * x + b * x * x + c * np.sqrt(x), nodes=unit_nodes(1024))
    pg = apply_transfer(m, g)
    assert abs(pg.quadrature_mass() - g.quadrature_mass()) <= 1e-5


def test_apply_array_is_positively_homogeneous(unit_map):
    # monotone cubic interpolation picks slopes from the data, so the discrete
    # operator is homogeneous but not additive on sign-changing data
    nodes = unit_nodes(512)
    op = TransferOperator(unit_map, nodes)
    u, v = nodes, np.sin(3 * nodes)
    assert np.allclose(op.apply_array(2.5 * v), 2.5 * op.apply_array(v), atol=1e-14)
    z = op.apply_array(u + 1j * v)
    assert np.allclose(z.real, op.apply_array(u)) and np.allclose(z.imag, op.apply_array(v))


def test_iterates_stay_monotone_and_concave(unit_map):
    its, rep = iterate_transfer(unit_map, seed_density(unit_map, "linear"), 30, stride=10)
    assert rep.monotone_up_to == 30 and rep.concave_up_to == 30
    assert not rep.failed and sum(rep.extrapolated) == 0
    assert len(its) == 4


def test_halfline_iterates_decrease(halfline):
    _, rep = iterate_transfer(halfline, seed_density(halfline, "exp"), 30)
    assert rep.monotone_up_to == 30 and max(rep.mass_drift) <= 1e-5


def test_mass_abort_returns_partial(farey):
    _, rep = iterate_transfer(farey, seed_density(farey), 5, mass_tol=1e-30)
    assert rep.aborted_at == 1 and rep.failed


def test_plateau_values_recorded(farey):
    _, rep = iterate_transfer(farey, seed_density(farey), 10, delta=0.01)
    pv = np.array(rep.plateau_values)
    assert len(pv) == 11 and np.all(np.diff(pv) > 0)


def test_cone_preserved(unit_map):
    assert check_cone_preservation(unit_map, seed_density(unit_map, "linear")).preserved


def test_cone_rejects_non_concave(farey):
    with pytest.raises(TransferError):
        check_cone_preservation(farey, seed_density(farey, "quadratic"))


@given(st.floats(1e-20, 0.9))
def test_truncate_plateau(delta):
    from ergomix.maps import build_builtin
    m = build_builtin("farey")
    g = seed_density(m, "linear", unit_nodes(512))
    gam = truncate_plateau(g, delta)
    level = g(np.array([delta]))[0]
    assert np.all(gam.values <= level * (1 + 1e-12))
    below = gam.nodes <= delta
    assert np.allclose(gam.values[below], g(gam.nodes[below]), rtol=1e-10)
    assert gam.quadrature_mass() <= g.quadrature_mass()


def test_truncate_plateau_errors(farey):
    g = seed_density(farey)
    with pytest.raises(TransferError):
        truncate_plateau(g, 2.0)


def test_incompatible_grid(farey, halfline):
    with pytest.raises(TransferError):
        apply_transfer(halfline, seed_density(farey))
