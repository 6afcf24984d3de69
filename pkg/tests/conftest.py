import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ergomix.maps import build_builtin

settings.register_profile("ergomix", max_examples=30, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ergomix")

UNIT_FAMILIES = [("farey", {}), ("t_alpha", {"alpha": 0.3}), ("t_alpha", {"alpha": 0.7}),
                 ("pm_quadratic", {})]
ALL_FAMILIES = UNIT_FAMILIES + [("pm_halfline", {})]


def family_id(item):
    name, params = item
    return name + "".join(f"_{k}{v}" for k, v in params.items())


@pytest.fixture(scope="session")
def farey():
    return build_builtin("farey")


@pytest.fixture(scope="session")
def halfline():
    return build_builtin("pm_halfline")


@pytest.fixture(params=UNIT_FAMILIES, ids=family_id, scope="session")
def unit_map(request):
    name, params = request.param
    return build_builtin(name, **params)


@pytest.fixture(params=ALL_FAMILIES, ids=family_id, scope="session")
def any_map(request):
    name, params = request.param
    return build_builtin(name, **params)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def record_acceptance(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
