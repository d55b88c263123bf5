import numpy as np
import pytest

from prhpg.benchmarks import msd_qlpv, scalar_hat
from prhpg.model import ParameterDomain, PolytopicModel, constant_basis
from prhpg.quadrature import rule_for_model
from prhpg.stage import CostSpec


def lti_model(A, B, d=1):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    domain = ParameterDomain(np.zeros(d), np.ones(d))
    return PolytopicModel(domain, constant_basis(d), A[None], B[None])


def random_spd(rng, n, shift=0.5):
    G = rng.standard_normal((n, n))
    return G @ G.T / n + shift * np.eye(n)


def riccati_recursion(A, B, Q, R, QN, N):
    """Classical time-varying Riccati recursion; returns (K_0, P_0)."""
    P = np.array(QN, dtype=float)
    K = None
    for _ in range(N):
        K = -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
        P = Q + A.T @ P @ A + A.T @ P @ B @ K
        P = 0.5 * (P + P.T)
    return K, P


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def msd():
    return msd_qlpv(d=2, knots=3)


@pytest.fixture(scope="session")
def msd_rule(msd):
    return rule_for_model(msd, [4, 4])


@pytest.fixture(scope="session")
def msd_cost():
    return CostSpec(np.eye(2), np.eye(1), np.eye(2))


@pytest.fixture(scope="session")
def scalar():
    return scalar_hat()


@pytest.fixture(scope="session")
def unit_cost():
    return CostSpec([[1.0]], [[1.0]], [[1.0]])


# --- acceptance summary -------------------------------------------------------

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    entry = _criteria.setdefault(number, {"title": title, "passed": 0, "failed": []})
    if report.when == "call" and report.passed:
        entry["passed"] += 1
    elif report.failed:
        entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        status = "FAIL" if e["failed"] else "PASS"
        detail = f"{e['passed']} passed" + (f", failed: {', '.join(e['failed'])}" if e["failed"] else "")
        terminalreporter.write_line(f"AC{number:>2} {status}  {e['title']} ({detail})")
