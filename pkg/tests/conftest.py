import pytest

from stablecone.kernel import get_profile

ACCEPTANCE: list[tuple[int, str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {num:2d}. {name}: {detail}")


@pytest.fixture
def record():
    """``record(num, name, ok, detail)`` logs one acceptance line and asserts ``ok``."""

    def _record(num: int, name: str, ok: bool, detail: str):
        ACCEPTANCE.append((num, name, bool(ok), detail))
        print(f"[{'PASS' if ok else 'FAIL'}] {num}. {name}: {detail}")
        assert ok, f"criterion {num} ({name}) failed: {detail}"

    return _record


@pytest.fixture(scope="session")
def cauchy1():
    return get_profile(1, 1.0)


@pytest.fixture(scope="session")
def cauchy2():
    return get_profile(2, 1.0)
