import pytest

_RESULTS: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion():
    """``criterion(label, passed, detail)`` records and prints one acceptance line, then asserts."""

    def record(label: str, passed: bool, detail: str = "") -> None:
        line = (label, bool(passed), detail)
        _RESULTS.append(line)
        print(f"{'PASS' if passed else 'FAIL'}  {label}  {detail}")
        assert passed, f"{label}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in _RESULTS:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {label}  {detail}")
