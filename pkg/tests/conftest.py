import pytest

from frosim.scenario import two_bus

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def scenario():
    return two_bus()


@pytest.fixture(scope="session")
def system(scenario):
    # one System per session so compiled step functions are reused
    return scenario.system()


@pytest.fixture(scope="session")
def run(scenario, system):
    cache = {}

    def _run(scheme, h, duration=None):
        key = (scheme, h, duration)
        if key not in cache:
            sc = scenario.with_overrides(scheme, h, duration)
            cache[key] = sc.simulator(system).run(sc.duration)
        return cache[key]

    return _run


@pytest.fixture(scope="session")
def reference(run):
    """The 5 us trapezoidal reference trace of the full 2.0 s scenario."""
    return run("emt", 5e-6)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}")
