from helpers import ACCEPTANCE_LOG


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LOG:
        return
    terminalreporter.section("acceptance criteria")
    for ac in sorted(ACCEPTANCE_LOG, key=lambda a: int(a.split("-")[1])):
        ok, detail = ACCEPTANCE_LOG[ac]
        terminalreporter.write_line(f"{ac:<6} {'PASS' if ok else 'FAIL'}  {detail}")
