import pytest

# criterion number -> (ok, detail), filled in by test_acceptance
ACCEPTANCE: dict = {}


def record(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(ok), detail)
    print(format_line(number))


def format_line(number: int) -> str:
    ok, detail = ACCEPTANCE[number]
    return f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(format_line(number))


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(12345)
