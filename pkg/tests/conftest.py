import pytest

_ACCEPTANCE = {}


@pytest.fixture
def verdict():
    """Record and print one pass/fail line per acceptance criterion."""

    def record(number, title, ok, detail=""):
        line = f"ACCEPTANCE {number} {'PASS' if ok else 'FAIL'}  {title}  {detail}".rstrip()
        _ACCEPTANCE[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])
