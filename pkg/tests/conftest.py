import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report_line():
    def add(number: int, title: str, ok: bool, detail: str) -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number} ({title}): {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line, flush=True)

    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
