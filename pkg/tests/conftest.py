import pytest

# one (number, passed, detail) entry per acceptance criterion that ran
ACCEPTANCE = []


@pytest.fixture
def criterion():
    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})"
        ACCEPTANCE.append((number, passed, line))
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, _, line in sorted(ACCEPTANCE):
        terminalreporter.write_line(line)
