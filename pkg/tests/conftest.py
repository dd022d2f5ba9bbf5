import pytest

_acceptance_key = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_acceptance_key] = []


@pytest.fixture
def acceptance(request):
    """Record one acceptance line per criterion; printed in the terminal summary."""
    lines = request.config.stash[_acceptance_key]

    def record(number, title, passed, detail=""):
        status = "PASS" if passed else "FAIL"
        line = f"[{status}] criterion {number}: {title}" + (f" | {detail}" if detail else "")
        lines.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_acceptance_key, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines, key=lambda t: t[0]):
            terminalreporter.write_line(line)
