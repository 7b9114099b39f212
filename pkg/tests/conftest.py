import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

# Acceptance criterion lines collected by tests/test_acceptance.py.
CRITERIA = []


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for line in CRITERIA:
        terminalreporter.write_line(line)
