import cases


def pytest_terminal_summary(terminalreporter):
    if not cases.ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in cases.ACCEPTANCE:
        terminalreporter.write_line(line)
