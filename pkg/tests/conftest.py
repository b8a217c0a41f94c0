"""Collects acceptance verdicts and prints them once at the end of the run."""

_LINES = []


def report(criterion, name, ok, detail):
    """Record one pass/fail line; returns ``ok`` so tests can assert on it."""
    line = f"[{criterion:>2}] {'PASS' if ok else 'FAIL'}  {name}: {detail}"
    _LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_LINES, key=lambda s: int(s[1:3])):
        terminalreporter.write_line(line)
