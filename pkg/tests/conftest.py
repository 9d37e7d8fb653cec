import time

import pytest

_LINES: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Run one acceptance criterion, record its PASS/FAIL line and assert it.

    ``body`` returns (ok, detail); an exception counts as a failure.  The
    wall-clock budget is part of the verdict.
    """

    def run(number: int, title: str, budget: float, body):
        start = time.perf_counter()
        try:
            ok, detail = body()
        except Exception as exc:  # reported as FAIL, then re-raised by the assert below
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        elapsed = time.perf_counter() - start
        in_time = elapsed < budget
        line = f"{'PASS' if ok and in_time else 'FAIL'}  [{number:2d}] {title}: {detail}; {elapsed:.2f} s (budget {budget:g} s)"
        _LINES[number] = line
        print(line)
        assert ok and in_time, line

    return run


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_LINES):
        terminalreporter.write_line(_LINES[k])
    passed = sum(line.startswith("PASS") for line in _LINES.values())
    terminalreporter.write_line(f"{passed}/{len(_LINES)} criteria passed")
