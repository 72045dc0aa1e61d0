import pytest


def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture
def criterion(request):
    """Record one pass/fail line per acceptance criterion for the terminal summary."""
    lines = request.config.acceptance_lines

    def record(number, title, checks):
        ok = all(passed for _, passed in checks)
        failed = [name for name, passed in checks if not passed]
        tail = "" if ok else "  failing: " + "; ".join(failed)
        lines.append(f"criterion {number} {'PASS' if ok else 'FAIL'}  {title}{tail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
