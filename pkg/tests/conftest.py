import os
import sys

from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, in criterion order."""
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when != "call" or "::test_criterion_" not in rep.nodeid:
                continue
            num = int(rep.nodeid.split("::test_criterion_")[1].split("_")[0])
            detail = "; ".join(f"{k}={v}" for k, v in rep.user_properties)
            lines.append((num, f"criterion {num}: {'PASS' if outcome == 'passed' else 'FAIL'}"
                               + (f" ({detail})" if detail else "")))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
