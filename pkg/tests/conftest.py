"""Prints one pass/fail line per acceptance criterion after the run."""


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in nodeid or rep.when != "call":
                continue
            name = nodeid.split("::")[-1]
            detail = dict(getattr(rep, "user_properties", [])).get("detail", "")
            lines.append((name, "PASS" if rep.passed else "FAIL", detail))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in sorted(lines):
        terminalreporter.write_line(f"{status}  {name}  {detail}")
