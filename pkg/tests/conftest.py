"""Collects acceptance verdicts and prints them after the run."""

ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("acceptance")
    if crit is None or report.when != "call":
        return
    ACCEPTANCE[crit[0]] = ("PASS" if report.passed else "FAIL", crit[1])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, label = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{status}] criterion {n}: {label}")
