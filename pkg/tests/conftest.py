import pytest

# (criterion, passed, detail) lines collected by tests/test_acceptance.py
ACCEPTANCE = []


@pytest.fixture
def criterion(request):
    """Call ``criterion(label, passed, detail)`` once per acceptance criterion."""

    def record(label, passed, detail=""):
        ACCEPTANCE.append((label, bool(passed), detail))
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in sorted(ACCEPTANCE, key=lambda r: int(r[0].split()[0][1:])):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {label}  {detail}".rstrip())
