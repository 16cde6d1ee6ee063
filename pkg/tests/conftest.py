import pytest

# criterion number -> (passed, detail), filled by test_acceptance
ACCEPTANCE = {}


def record_criterion(number: int, passed: bool, detail: str):
    ACCEPTANCE[number] = (bool(passed), detail)
    line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
    print(line)
    return line


@pytest.hookimpl(trylast=True)
def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}")
