import os

import pytest
from hypothesis import HealthCheck, settings

from rdspec.dynamics import shipped_system

settings.register_profile(
    "default", max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("thorough", max_examples=1000, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


# criterion number -> (passed, one-line detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in range(1, 16):
        ok, detail = ACCEPTANCE.get(num, (False, "not reached (test errored or was deselected)"))
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def criterion():
    """``criterion(num, ok, detail)`` records a result line, then asserts it."""

    def check(num: int, ok: bool, detail: str) -> None:
        ACCEPTANCE[num] = (bool(ok), detail)
        print(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, f"criterion {num}: {detail}"

    return check


@pytest.fixture(scope="session")
def doubling():
    return shipped_system("doubling")


@pytest.fixture(scope="session")
def trap():
    return shipped_system("trap")


@pytest.fixture(scope="session")
def mixed():
    return shipped_system("mixed")
