"""Collects the acceptance verdict lines and repeats them in the terminal summary."""

VERDICTS = []


def record(criterion, ok, detail):
    status = ok if isinstance(ok, str) else ("PASS" if ok else "FAIL")
    line = f"{status} criterion {criterion}: {detail}"
    VERDICTS.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
