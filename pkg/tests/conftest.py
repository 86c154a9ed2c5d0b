import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_rotation(rng, d):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_spd(rng, d, spread=1.0):
    q = random_rotation(rng, d)
    lam = np.exp(spread * rng.standard_normal(d))
    return (q * lam) @ q.T


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def sym_strategy(d, bound=3.0):
    return hnp.arrays(float, (d, d), elements=st.floats(-bound, bound)).map(
        lambda a: 0.5 * (a + a.T))


def spd_strategy(d, spread=1.5):
    """SPD matrices built from a random rotation and bounded log-eigenvalues."""
    return st.tuples(st.integers(0, 2 ** 32 - 1),
                     hnp.arrays(float, (d,), elements=st.floats(-spread, spread))).map(
        lambda t: _spd_from(t[0], t[1]))


def _spd_from(seed, logs):
    q = random_rotation(np.random.default_rng(seed), len(logs))
    return (q * np.exp(logs)) @ q.T


_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    report = (yield).get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        number, title = mark.args
        _ACCEPTANCE[number] = (title, report.passed, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, passed, seconds = _ACCEPTANCE[number]
        terminalreporter.write_line(
            f"[{number:2d}] {'PASS' if passed else 'FAIL'}  {title}  ({seconds:.1f} s)")
