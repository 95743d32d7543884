import _util


def pytest_terminal_summary(terminalreporter):
    if not _util.ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_util.ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
