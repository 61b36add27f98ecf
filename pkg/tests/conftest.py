import pytest

_LINES: list[str] = []


class Verdicts:
    """Collects one PASS/FAIL line per acceptance criterion."""

    def record(self, criterion: int, title: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {criterion} ({title}): {detail}"
        _LINES.append(line)
        print(line)
        return ok


@pytest.fixture(scope="session")
def verdicts() -> Verdicts:
    return Verdicts()


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance")
        for line in _LINES:
            terminalreporter.write_line(line)
