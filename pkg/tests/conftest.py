import pytest

_LINES: dict[int, str] = {}


class AcceptanceLog:
    def record(self, num: int, name: str, ok: bool, detail: str) -> bool:
        line = f"criterion {num:2d}  {'PASS' if ok else 'FAIL'}  {name}: {detail}"
        _LINES[num] = line
        print(line)
        return ok


@pytest.fixture(scope="session")
def acceptance_log():
    return AcceptanceLog()


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_LINES):
        terminalreporter.write_line(_LINES[num])
