import pytest

from scalemod.config import SHIPPED, load_shipped


@pytest.fixture(scope="session")
def shipped():
    return {name: load_shipped(name) for name in SHIPPED}


@pytest.fixture(scope="session")
def scen_g(shipped):
    return shipped["scen_gaussian_sum"]


@pytest.fixture(scope="session")
def scen_prod(shipped):
    return shipped["scen_gaussian_product"]


@pytest.fixture(scope="session")
def scen_c(shipped):
    return shipped["scen_cauchy_sum"]


_SCORECARD = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_SCORECARD] = []


@pytest.fixture
def scorecard(request):
    """Record one acceptance line; printed in the terminal summary."""
    lines = request.config.stash[_SCORECARD]

    def record(criterion, ok, seconds, detail):
        lines.append((criterion, f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  "
                                 f"({seconds:.2f} s)  {detail}"))

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_SCORECARD, [])
    if lines:
        terminalreporter.section("acceptance scorecard")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
