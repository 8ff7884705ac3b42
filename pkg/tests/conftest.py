"""Shared pytest hooks: one summary line per acceptance criterion."""

ACCEPTANCE_RESULTS: dict = {}


def record_acceptance(key: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_RESULTS[key] = (passed, detail)


def format_acceptance_lines() -> list:
    return [f"{'PASS' if ok else 'FAIL'}  criterion {key}: {detail}"
            for key, (ok, detail) in sorted(ACCEPTANCE_RESULTS.items())]


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in format_acceptance_lines():
        terminalreporter.write_line(line)
