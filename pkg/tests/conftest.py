import pytest

# Lines recorded by the acceptance suite, printed once at the end of the run.
ACCEPTANCE_LINES = []


def record(criterion, passed, detail):
    """``passed`` is True, False or None (skipped)."""
    status = {True: "PASS", False: "FAIL", None: "SKIP"}[passed]
    line = f"[{status}] criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


@pytest.fixture
def acceptance():
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
