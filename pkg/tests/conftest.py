import pytest


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def criterion(request):
    """Record one acceptance verdict line, then assert it."""
    lines = request.config._acceptance_lines

    def record(number, title, ok, detail, elapsed, limit):
        in_time = elapsed < limit
        verdict = "PASS" if ok and in_time else "FAIL"
        lines.append(f"[{verdict}] {number:>2}. {title}: {detail} "
                     f"({elapsed:.3f} s, limit {limit:g} s)")
        assert ok, detail
        assert in_time, f"took {elapsed:.3f} s, limit {limit} s"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines, key=lambda s: int(s.split(".")[0].split()[-1])):
        terminalreporter.write_line(line)
