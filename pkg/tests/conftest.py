"""Shared pytest hooks: collects one pass/fail line per acceptance criterion."""

ACCEPTANCE_LINES = []


def record(criterion: str, ok: bool, detail: str):
    ACCEPTANCE_LINES.append((criterion, bool(ok), detail))
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, ok, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")
