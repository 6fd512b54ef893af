import numpy as np
import pytest

from localcal.dataio import Dataset

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    number, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        _ACCEPTANCE[number] = (status, title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        status, title, detail = _ACCEPTANCE[number]
        line = f"[{status}] criterion {number}: {title}"
        if detail:
            line += f" | {detail}"
        terminalreporter.write_line(line)


def random_dataset(n=60, d=3, K=2, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = (np.arange(n) % K)[rng.permutation(n)]
    X[:, 0] += 1.5 * y
    return Dataset(X, y, K)


def random_simplex(n, K, seed=0):
    return np.random.default_rng(seed).dirichlet(np.ones(K), size=n)


@pytest.fixture
def small_ds():
    return random_dataset()
