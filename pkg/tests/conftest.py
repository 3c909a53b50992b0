"""Collects the acceptance verdict lines and repeats them in the terminal summary."""

import pytest

VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record ``CRITERION <n> PASS|FAIL <detail>`` and fail the test on FAIL."""

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"CRITERION {number:2d} {'PASS' if ok else 'FAIL'} {detail}"
        VERDICTS.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS):
            terminalreporter.write_line(line)
