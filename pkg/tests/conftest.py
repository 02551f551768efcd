import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def criterion(record_property):
    """Tag a test as an acceptance criterion so the summary lists it."""

    def tag(number: int, title: str):
        record_property("criterion", f"{number:02d} {title}")

    return tag


def pytest_terminal_summary(terminalreporter):
    rows = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if getattr(rep, "when", "call") != "call" and outcome == "passed":
                continue
            for key, value in getattr(rep, "user_properties", []):
                if key == "criterion":
                    rows.append((value, "PASS" if outcome == "passed" else "FAIL"))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for value, verdict in sorted(set(rows)):
        terminalreporter.write_line(f"[{verdict}] criterion {value}")
