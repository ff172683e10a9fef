import pytest

# Acceptance tests append (criterion, passed, detail) here; the lines are
# printed in the terminal summary.
ACCEPTANCE_LINES: list[tuple[int, bool, str]] = []


def record(criterion: int, passed: bool, detail: str):
    ACCEPTANCE_LINES.append((criterion, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(ACCEPTANCE_LINES, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {criterion}: {'PASS' if passed else 'FAIL'} - {detail}")


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(12345)
