import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from caplab.instances import serrin_cap, solve_instance, strip_capillary, symmetric_slab

settings.register_profile("caplab", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("caplab")

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    n, title = mark.args
    measured = dict(item.user_properties).get("measured", "")
    _CRITERIA[n] = (title, rep.passed, measured)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, ok, measured = _CRITERIA[n]
        tr.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}"
                      + (f"  [{measured}]" if measured else ""))
    npass = sum(ok for _, ok, _ in _CRITERIA.values())
    tr.write_line(f"{npass}/{len(_CRITERIA)} criteria passed")


@pytest.fixture
def measured(request):
    """Attach measured values to the acceptance summary line."""
    def put(**kw):
        txt = ", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in kw.items())
        request.node.user_properties.append(("measured", txt))
    return put


@pytest.fixture(scope="session")
def strip_inst():
    return strip_capillary()


@pytest.fixture(scope="session")
def strip32(strip_inst):
    return solve_instance(strip_inst, 1 / 32)


@pytest.fixture(scope="session")
def strip64(strip_inst):
    return solve_instance(strip_inst, 1 / 64)


@pytest.fixture(scope="session")
def strip_tall64():
    return solve_instance(strip_capillary(y_extent=(-8.5, 8.5)), 1 / 64)


@pytest.fixture(scope="session")
def cap32():
    return solve_instance(serrin_cap(), 1 / 32)


@pytest.fixture(scope="session")
def cap64():
    return solve_instance(serrin_cap(), 1 / 64)


@pytest.fixture(scope="session")
def slab_inst():
    return symmetric_slab()


@pytest.fixture(scope="session")
def slab128(slab_inst):
    return solve_instance(slab_inst, 1 / 128)


@pytest.fixture
def rng():
    return np.random.default_rng(20240531)
