import numpy as np
import pytest
from hypothesis import given, strategies as st

from ergomix.grid import seed_density
from ergomix.observables import (ObservableError, constant, coupling, default_schedule,
                                 estimate_av, finite_volume_average, indicator,
                                 linear_combination, mu_distance, product, sin2_phi, sin_phi,
                                 volume_measure)


def test_constant_average(any_map):
    est = estimate_av(any_map, constant(0.7))
    assert est.converged and est.extrapolated == pytest.approx(0.7, abs=1e-12)


def test_sin_phi_average_is_zero(any_map):
    est = estimate_av(any_map, sin_phi(any_map))
    assert est.converged and abs(est.extrapolated) <= 0.02


def test_sin2_phi_average_is_half(unit_map):
    est = estimate_av(unit_map, sin2_phi(unit_map))
    assert abs(est.extrapolated - 0.5) <= 0.02


def test_finite_volume_average_closed_form(farey):
    # on (0, L] in the measure coordinate, mean of sin is (1 - cos L) / L
    a = np.exp(-7.0)
    assert finite_volume_average(farey, sin_phi(farey), a) == pytest.approx((1 - np.cos(7.0)) / 7.0,
                                                                            abs=1e-10)


def test_finite_volume_rejects_bad_cut(farey, halfline):
    with pytest.raises(ObservableError):
        finite_volume_average(farey, sin_phi(farey), 1.5)
    with pytest.raises(ObservableError):
        finite_volume_average(halfline, sin_phi(halfline), -1.0)


def test_default_schedule_is_geometric_for_farey(farey):
    a = default_schedule(farey, depth=64.0, steps=8)
    assert np.allclose(np.log(a), -8.0 * np.arange(1, 9))
    assert volume_measure(farey, a[-1]) == pytest.approx(64.0)


def test_indicator_has_zero_average(halfline):
    est = estimate_av(halfline, indicator(0.0, 3.0))
    assert abs(est.extrapolated) <= 3.0 / 200 + 1e-9


def test_linear_combination_average(farey):
    F = linear_combination([(2.0, sin2_phi(farey)), (-1.0, constant(1.0))])
    assert F.known_av == pytest.approx(0.0)
    assert F.sup_bound == pytest.approx(3.0)


def test_product_bound(farey):
    F = product(sin_phi(farey), sin_phi(farey))
    x = np.linspace(0.01, 0.99, 50)
    assert F.check_bound(x)
    assert np.allclose(F(x), sin2_phi(farey)(x))


def test_coupling_with_constant_is_mass(any_map):
    g = seed_density(any_map, "linear" if any_map.kind == "unit_interval" else "exp")
    assert coupling(any_map, constant(2.0), g) == pytest.approx(2.0 * g.mass, rel=1e-8)


def test_coupling_support_mismatch(halfline):
    g = seed_density(halfline, "exp")
    with pytest.raises(ObservableError, match="support"):
        coupling(halfline, indicator(100.0, 200.0), g)


@given(st.floats(1e-6, 0.99), st.floats(1e-6, 0.99), st.floats(1e-6, 0.99))
def test_mu_distance_is_a_metric(x, y, z):
    from ergomix.maps import build_builtin
    m = build_builtin("farey")
    d = lambda a, b: float(mu_distance(m, a, b))  # noqa: E731
    assert d(x, y) == pytest.approx(d(y, x))
    assert d(x, z) <= d(x, y) + d(y, z) + 1e-12
    assert d(x, x) == 0.0
