import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the benchmark acceptance lines after the test summary."""

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
