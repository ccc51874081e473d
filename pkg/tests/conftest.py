import pytest

_VERDICTS_KEY = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record a PASS/FAIL line for an acceptance criterion and return ``ok``.

    ``part`` distinguishes sub-checks of one criterion, e.g. (4, "a"); tests
    record every part before asserting so each one gets a line.
    """
    lines = request.config.stash.setdefault(_VERDICTS_KEY, [])

    def record(number: int, ok: bool, detail: str, part: str = "") -> bool:
        label = f"{number}{part}"
        lines.append(((number, part), f"criterion {label:<4} {'PASS' if ok else 'FAIL'}  {detail}"))
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
