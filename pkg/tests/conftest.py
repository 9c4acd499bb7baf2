"""Shared pytest wiring: a visible pass/fail line for every acceptance criterion."""


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows: dict[str, str] = {}
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance" not in nodeid or "::" not in nodeid:
                continue
            name = nodeid.split("::")[-1]
            if outcome in ("failed", "error"):
                rows[name] = "FAIL"
            elif getattr(report, "when", "call") == "call":
                rows.setdefault(name, "PASS")
    if rows:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance criteria:")
        for name in sorted(rows):
            terminalreporter.write_line(f"  {name}: {rows[name]}")
