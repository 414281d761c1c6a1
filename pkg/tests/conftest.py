import pytest

_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_report(request):
    """Record one PASS/FAIL line per criterion; the lines are printed in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def report(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((number, line))
        print(line, flush=True)

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if not lines:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for _, line in sorted(lines):
        terminalreporter.write_line(line)
